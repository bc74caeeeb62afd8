use serde::Serialize;

use crate::error::Result;
use crate::netsim::EventTimeline;
use crate::objective::Objective;
use crate::time::SimTime;
use crate::vecops::{self, ParamVector};

/// State after `iter` updates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub loss: f64,
    pub grad_norm_sq: f64,
    pub sim_time: SimTime,
    pub bytes: SimTime,
    pub consensus_dist: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunMetrics {
    pub algorithm: String,
    pub gamma: f64,
    pub warnings: Vec<String>,
    pub initial_loss: f64,
    pub records: Vec<IterationRecord>,
    /// Averaged model `x_bar_t` after each update.
    #[serde(skip)]
    pub trajectory: Vec<ParamVector>,
    pub final_model: ParamVector,
    pub comm_rounds: usize,
    pub total_comm_time: SimTime,
    /// Closed-form and simulated cost of one communication round, when fixed.
    pub round_closed_form: Option<SimTime>,
    pub round_simulated: Option<SimTime>,
    pub eta: Option<SimTime>,
    /// `t - D(t)` of every applied gradient (asgd).
    pub staleness: Vec<usize>,
    /// Largest per-step residual of the error-compensation identity (ec-sgd).
    pub lemma_residual_max: Option<f64>,
    #[serde(skip)]
    pub timeline: Option<EventTimeline>,
}

impl RunMetrics {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    /// Mean of `||f'(x_bar_t)||^2` over all recorded iterates.
    pub fn criterion(&self) -> f64 {
        self.tail_criterion(1.0)
    }

    /// Mean of `||f'||^2` over the last `fraction` of the run.
    pub fn tail_criterion(&self, fraction: f64) -> f64 {
        let n = self.records.len();
        let take = ((n as f64 * fraction).ceil() as usize).clamp(1, n.max(1));
        let tail = &self.records[n - take..];
        tail.iter().map(|r| r.grad_norm_sq).sum::<f64>() / tail.len() as f64
    }

    pub fn min_grad_norm_sq(&self) -> f64 {
        self.records.iter().map(|r| r.grad_norm_sq).fold(f64::INFINITY, f64::min)
    }

    pub fn total_sim_time(&self) -> SimTime {
        self.records.last().map(|r| r.sim_time).unwrap_or(SimTime::ZERO)
    }

    pub fn total_bytes(&self) -> SimTime {
        self.records.last().map(|r| r.bytes).unwrap_or(SimTime::ZERO)
    }

    pub fn final_consensus(&self) -> f64 {
        self.records.last().map(|r| r.consensus_dist).unwrap_or(0.0)
    }

    pub fn max_staleness(&self) -> Option<usize> {
        self.staleness.iter().copied().max()
    }

    /// Per-iteration CSV with a header row, '.' decimals and '\n' endings.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("iter,loss,grad_norm_sq,sim_time,bytes,consensus_dist\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.iter, r.loss, r.grad_norm_sq, r.sim_time, r.bytes, r.consensus_dist
            );
        }
        out
    }
}

/// Accumulates per-iteration records against the objective.
pub(crate) struct Recorder<'a> {
    obj: &'a Objective,
    pub clock: SimTime,
    pub bytes: SimTime,
    pub records: Vec<IterationRecord>,
    pub trajectory: Vec<ParamVector>,
}

impl<'a> Recorder<'a> {
    pub fn new(obj: &'a Objective) -> Self {
        Recorder {
            obj,
            clock: SimTime::ZERO,
            bytes: SimTime::ZERO,
            records: Vec::new(),
            trajectory: Vec::new(),
        }
    }

    pub fn record(&mut self, x_bar: &[f64], consensus_dist: f64) -> Result<()> {
        let g = self.obj.full_gradient(x_bar)?;
        self.records.push(IterationRecord {
            iter: self.records.len() + 1,
            loss: self.obj.value(x_bar)?,
            grad_norm_sq: vecops::norm_sq(&g),
            sim_time: self.clock,
            bytes: self.bytes,
            consensus_dist,
        });
        self.trajectory.push(x_bar.to_vec());
        Ok(())
    }
}
