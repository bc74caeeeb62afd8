use crate::collectives::{self, CollectiveKind};
use crate::compression::Compressor;
use crate::error::{Error, Result};
use crate::netsim;
use crate::objective::Objective;
use crate::vecops::{self, ParamVector};

use super::metrics::Recorder;
use super::{LrRule, RoundTiming, RunMetrics, Setup, TrainerConfig};

const RHO_LIMIT: f64 = 1.0 - 1e-12;

/// Row mean of the worker models, or worker 0's model when all agree.
fn average_model(models: &[ParamVector]) -> ParamVector {
    if models.windows(2).all(|w| w[0] == w[1]) {
        return models[0].clone();
    }
    vecops::mean(models[0].len(), models.iter().map(|m| m.as_slice()))
}

/// `||X - X_bar||_F`.
fn consensus_distance(models: &[ParamVector], mean: &[f64]) -> f64 {
    models
        .iter()
        .map(|m| vecops::norm_sq(&vecops::sub(m, mean)))
        .sum::<f64>()
        .sqrt()
}

/// Decentralized SGD: `X_{t+1} = (X_t - gamma G_t) W`.
pub fn run_dsgd(cfg: &TrainerConfig, obj: &Objective) -> Result<RunMetrics> {
    let mut s = Setup::new(cfg, obj)?;
    let n = cfg.workers;
    let w = s.confusion()?;
    if w.rho() >= RHO_LIMIT {
        return Err(Error::Config(format!(
            "confusion matrix has rho = {} (disconnected network); dsgd needs rho < 1",
            w.rho()
        )));
    }
    let inputs = super::LrInputs {
        sigma: Some(s.worker_sigma()?),
        varsigma: Some(s.sharded.varsigma_bound()?),
        rho: Some(w.rho()),
        ..s.base_inputs()
    };
    let gamma = s.gamma(LrRule::Dsgd, inputs)?;

    let sizes = s.sizes(Compressor::Identity);
    let sched = collectives::neighbor_schedule(&w, s.dim(), &sizes)?;
    let round = if sched.requests.is_empty() {
        RoundTiming::none()
    } else {
        let timeline = netsim::simulate(s.network(sched.nodes), &sched.requests)?;
        let closed = if cfg.topology == crate::topology::TopologyKind::Ring && n >= 3 {
            Some(collectives::closed_form_cost(
                CollectiveKind::DecentralizedRing,
                n,
                sizes.unit_per_element * crate::SimTime::from_integer(s.dim() as i64),
                &s.network(n),
                crate::SimTime::from_integer(1),
            )?)
        } else {
            None
        };
        RoundTiming {
            comm: timeline.makespan_from(crate::SimTime::ZERO)?,
            bytes: sizes.bytes_of(timeline.total_size()),
            closed_form: closed,
            eta: Some(crate::SimTime::from_integer(1)),
            timeline: Some(timeline),
        }
    };
    let step_time = cfg.network.slowest_compute(n) + round.comm;

    let mut models = vec![s.x0()?; n];
    let mut rec = Recorder::new(obj);
    for _ in 0..cfg.iterations {
        let mut half = Vec::with_capacity(n);
        for (i, x) in models.iter().enumerate() {
            let g = s.gradient(i, x)?;
            let mut y = x.clone();
            vecops::step(&mut y, gamma, &g);
            half.push(y);
        }
        models = w.mix(&half)?;
        let mean = average_model(&models);
        rec.clock += step_time;
        rec.bytes += round.bytes;
        rec.record(&mean, consensus_distance(&models, &mean))?;
    }
    let rounds = if round.timeline.is_some() { cfg.iterations } else { 0 };
    let mut m = s.finish(gamma, rec);
    round.apply(&mut m, rounds);
    m.eta = None;
    Ok(m)
}

/// Local SGD with a full-precision ring AllReduce average after every `K`
/// steps and after the final step.
pub fn run_k_step_avg(cfg: &TrainerConfig, obj: &Objective) -> Result<RunMetrics> {
    let mut s = Setup::new(cfg, obj)?;
    let n = cfg.workers;
    let k = cfg.k.expect("validated");
    let inputs = super::LrInputs {
        sigma: Some(s.worker_sigma()? / (n as f64).sqrt()),
        ..s.base_inputs()
    };
    let gamma = s.gamma(LrRule::Sgd, inputs)?;
    let kind = CollectiveKind::AllreduceRingPartitioned;
    let round = if n > 1 {
        let sizes = s.sizes(Compressor::Identity);
        let r = s.round(kind, Compressor::Identity)?;
        RoundTiming::from_round(r, &sizes, crate::SimTime::from_integer(1))
    } else {
        RoundTiming::none()
    };
    let compute = cfg.network.slowest_compute(n);

    let mut models = vec![s.x0()?; n];
    let mut rec = Recorder::new(obj);
    let mut rounds = 0;
    for t in 0..cfg.iterations {
        for (i, x) in models.iter_mut().enumerate() {
            let g = s.gradient(i, x)?;
            vecops::step(x, gamma, &g);
        }
        rec.clock += compute;
        if (t + 1) % k == 0 || t + 1 == cfg.iterations {
            if n > 1 {
                let avg = collectives::average(kind, &models)?;
                models = vec![avg; n];
                rec.clock += round.comm;
                rec.bytes += round.bytes;
            }
            rounds += 1;
        }
        let mean = average_model(&models);
        rec.record(&mean, consensus_distance(&models, &mean))?;
    }
    let mut m = s.finish(gamma, rec);
    round.apply(&mut m, if n > 1 { rounds } else { 0 });
    Ok(m)
}
