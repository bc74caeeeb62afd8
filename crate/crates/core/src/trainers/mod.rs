//! Optimization loops over simulated workers.
//!
//! Every trainer draws worker `n`'s minibatches from its own shard using the
//! stream `Sampling(n)` of the run seed, so algorithms that should coincide
//! consume identical samples. Simulated time advances by the slowest worker's
//! compute time plus the makespan of the round's message schedule.

mod asgd;
mod config;
mod decentralized;
mod lr;
mod metrics;
mod sync;

pub use asgd::run_asgd;
pub use config::{Algorithm, CsgdForm, LearningRate, MbImplementation, NetworkConfig, TrainerConfig};
pub use decentralized::{run_dsgd, run_k_step_avg};
pub use lr::{auto_learning_rate, csgd_sigma, side_conditions, LrChoice, LrInputs, LrRule};
pub use metrics::{IterationRecord, RunMetrics};
pub use sync::{run_csgd, run_ec_sgd, run_gd, run_mb_sgd, run_sgd};

use crate::collectives::{self, CollectiveKind, RoundCost, SizeModel};
use crate::compression::{self, Compressor};
use crate::error::Result;
use crate::netsim::NetworkParams;
use crate::objective::{Objective, ShardedObjective};
use crate::rng::{self, Rng, Stream};
use crate::sampling::{self, MinibatchSpec};
use crate::time::SimTime;
use crate::topology::{self, ConfusionMatrix};
use crate::vecops::ParamVector;

/// Runs the configured algorithm.
pub fn run(cfg: &TrainerConfig, obj: &Objective) -> Result<RunMetrics> {
    match cfg.algorithm {
        Algorithm::Gd => run_gd(cfg, obj),
        Algorithm::Sgd => run_sgd(cfg, obj),
        Algorithm::MbSgd => run_mb_sgd(cfg, obj),
        Algorithm::Csgd => run_csgd(cfg, obj),
        Algorithm::EcSgd => run_ec_sgd(cfg, obj),
        Algorithm::Asgd => run_asgd(cfg, obj),
        Algorithm::Dsgd => run_dsgd(cfg, obj),
        Algorithm::KStepAvg => run_k_step_avg(cfg, obj),
    }
}

/// Mutable per-run state shared by the loops.
pub(crate) struct Setup<'a> {
    pub cfg: &'a TrainerConfig,
    pub obj: &'a Objective,
    pub sharded: ShardedObjective,
    pub spec: MinibatchSpec,
    pub samplers: Vec<Rng>,
    pub comp_rngs: Vec<Rng>,
    pub server_rng: Rng,
    pub warnings: Vec<String>,
}

impl<'a> Setup<'a> {
    pub fn new(cfg: &'a TrainerConfig, obj: &'a Objective) -> Result<Self> {
        cfg.validate()?;
        let sharded = ShardedObjective::new(obj.clone(), cfg.workers)?;
        let spec = MinibatchSpec::new(cfg.batch, cfg.sampling);
        for n in 0..cfg.workers {
            spec.validate(sharded.shard(n).len())?;
        }
        let mut warnings = Vec::new();
        if !cfg.compressor.is_unbiased() && cfg.algorithm == Algorithm::Csgd {
            warnings.push(format!(
                "WARNING: csgd with biased compressor {}; convergence theory assumes unbiased compression",
                cfg.compressor.label()
            ));
        }
        Ok(Setup {
            cfg,
            obj,
            spec,
            samplers: (0..cfg.workers).map(|n| rng::stream(cfg.seed, Stream::Sampling(n))).collect(),
            comp_rngs: (0..cfg.workers)
                .map(|n| rng::stream(cfg.seed, Stream::WorkerCompression(n)))
                .collect(),
            server_rng: rng::stream(cfg.seed, Stream::ServerCompression),
            sharded,
            warnings,
        })
    }

    pub fn dim(&self) -> usize {
        self.obj.dim()
    }

    pub fn x0(&self) -> Result<ParamVector> {
        match &self.cfg.x0 {
            Some(x) => {
                if x.len() != self.dim() {
                    return Err(crate::Error::DimensionMismatch {
                        expected: self.dim(),
                        actual: x.len(),
                    });
                }
                Ok(x.clone())
            }
            None => Ok(vec![0.0; self.dim()]),
        }
    }

    /// Worker `n`'s minibatch gradient at `x`.
    pub fn gradient(&mut self, n: usize, x: &[f64]) -> Result<ParamVector> {
        let batch = sampling::draw_from(&self.spec, self.sharded.shard(n), &mut self.samplers[n])?;
        self.obj.batch_gradient(x, &batch)
    }

    pub fn network(&self, nodes: usize) -> NetworkParams {
        NetworkParams::new(self.cfg.network.latency, self.cfg.network.transfer_per_unit, nodes)
    }

    pub fn sizes(&self, compressor: Compressor) -> SizeModel {
        SizeModel::compressed(self.cfg.network.unit_per_element, compressor)
    }

    pub fn round(&self, kind: CollectiveKind, compressor: Compressor) -> Result<RoundCost> {
        collectives::round_cost(kind, self.cfg.workers, self.dim(), &self.network(self.cfg.workers), &self.sizes(compressor))
    }

    /// Per-worker sigma of one minibatch gradient.
    pub fn worker_sigma(&self) -> Result<f64> {
        let per_sample = if self.cfg.workers == 1 {
            self.obj.sigma_bound()
        } else {
            self.sharded.inner_sigma_bound()?
        };
        let smallest = (0..self.cfg.workers).map(|n| self.sharded.shard(n).len()).min().unwrap_or(1);
        Ok(per_sample * sampling::variance_factor(smallest, self.cfg.batch, self.cfg.sampling)?.sqrt())
    }

    /// `sigma'` measured on shard gradients at the reference points.
    pub fn sigma_prime(&self) -> Result<f64> {
        if self.cfg.compressor.is_identity() {
            return Ok(0.0);
        }
        let mut probes = Vec::new();
        for x in self.obj.reference_points() {
            for n in 0..self.cfg.workers {
                probes.push(self.sharded.shard_gradient(n, x)?);
            }
        }
        let mut r = rng::stream(self.cfg.seed, Stream::Probe);
        Ok(compression::measure_sigma_prime(&self.cfg.compressor, &probes, 100, &mut r)?.sqrt())
    }

    pub fn base_inputs(&self) -> LrInputs {
        LrInputs {
            l: Some(self.obj.smoothness()),
            iterations: self.cfg.iterations,
            workers: self.cfg.workers,
            tau: self.cfg.tau,
            ..Default::default()
        }
    }

    /// Resolves `gamma`, recording side-condition violations as warnings.
    pub fn gamma(&mut self, rule: LrRule, inputs: LrInputs) -> Result<f64> {
        let gamma = match self.cfg.gamma {
            LearningRate::Auto => auto_learning_rate(rule, &inputs)?.gamma,
            LearningRate::Fixed(g) => g,
        };
        for v in side_conditions(rule, gamma, &inputs) {
            log::warn!("{}: {v}", self.cfg.algorithm.label());
            self.warnings.push(v);
        }
        Ok(gamma)
    }

    pub fn confusion(&self) -> Result<ConfusionMatrix> {
        topology::make_matrix(&self.cfg.topology, self.cfg.workers)
    }

    pub fn finish(self, gamma: f64, rec: metrics::Recorder<'_>) -> RunMetrics {
        RunMetrics {
            algorithm: self.cfg.algorithm.label().to_string(),
            gamma,
            warnings: self.warnings,
            initial_loss: self.cfg.x0.as_ref().map_or_else(
                || self.obj.value(&vec![0.0; self.obj.dim()]).unwrap_or(f64::NAN),
                |x| self.obj.value(x).unwrap_or(f64::NAN),
            ),
            final_model: rec.trajectory.last().cloned().unwrap_or_default(),
            records: rec.records,
            trajectory: rec.trajectory,
            ..Default::default()
        }
    }
}

/// Fixed per-iteration communication of a synchronous algorithm.
pub(crate) struct RoundTiming {
    pub comm: SimTime,
    pub bytes: SimTime,
    pub closed_form: Option<SimTime>,
    pub eta: Option<SimTime>,
    pub timeline: Option<crate::netsim::EventTimeline>,
}

impl RoundTiming {
    pub fn none() -> Self {
        RoundTiming {
            comm: SimTime::ZERO,
            bytes: SimTime::ZERO,
            closed_form: None,
            eta: None,
            timeline: None,
        }
    }

    pub fn from_round(round: RoundCost, sizes: &SizeModel, eta: SimTime) -> Self {
        RoundTiming {
            comm: round.simulated_cost,
            bytes: sizes.bytes_of(round.total_units),
            closed_form: Some(round.closed_form_cost),
            eta: Some(eta),
            timeline: Some(round.timeline),
        }
    }

    pub fn apply(&self, m: &mut RunMetrics, rounds: usize) {
        m.comm_rounds = rounds;
        m.total_comm_time = self.comm * rounds as i64;
        m.round_closed_form = self.closed_form;
        m.round_simulated = self.timeline.as_ref().map(|_| self.comm);
        m.eta = self.eta;
        m.timeline = self.timeline.clone();
    }
}
