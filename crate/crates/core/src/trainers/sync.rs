use crate::collectives::{self, CollectiveKind, SizeModel};
use crate::compression::Compressor;
use crate::error::Result;
use crate::objective::Objective;
use crate::vecops::{self, ParamVector};

use super::metrics::Recorder;
use super::{CsgdForm, LrRule, MbImplementation, RoundTiming, RunMetrics, Setup, TrainerConfig};

fn timing(s: &Setup, kind: CollectiveKind, compressor: Compressor) -> Result<RoundTiming> {
    let sizes: SizeModel = s.sizes(compressor.clone());
    let round = s.round(kind, compressor)?;
    let (_, eta) = collectives::closed_form_inputs(kind, s.cfg.workers, s.dim(), &sizes)?;
    Ok(RoundTiming::from_round(round, &sizes, eta))
}

/// `x_{t+1} = x_t - gamma f'(x_t)`.
pub fn run_gd(cfg: &TrainerConfig, obj: &Objective) -> Result<RunMetrics> {
    let mut s = Setup::new(cfg, obj)?;
    let gamma = s.gamma(LrRule::Gd, s.base_inputs())?;
    let mut x = s.x0()?;
    let mut rec = Recorder::new(obj);
    let compute = cfg.network.compute_time_of(0);
    for _ in 0..cfg.iterations {
        let g = obj.full_gradient(&x)?;
        vecops::step(&mut x, gamma, &g);
        rec.clock += compute;
        rec.record(&x, 0.0)?;
    }
    Ok(s.finish(gamma, rec))
}

/// Single-worker SGD on minibatches of `cfg.batch`.
pub fn run_sgd(cfg: &TrainerConfig, obj: &Objective) -> Result<RunMetrics> {
    let mut s = Setup::new(cfg, obj)?;
    let inputs = super::LrInputs {
        sigma: Some(s.worker_sigma()?),
        ..s.base_inputs()
    };
    let gamma = s.gamma(LrRule::Sgd, inputs)?;
    let mut x = s.x0()?;
    let mut rec = Recorder::new(obj);
    let compute = cfg.network.compute_time_of(0);
    for _ in 0..cfg.iterations {
        let g = s.gradient(0, &x)?;
        vecops::step(&mut x, gamma, &g);
        rec.clock += compute;
        rec.record(&x, 0.0)?;
    }
    Ok(s.finish(gamma, rec))
}

fn worker_gradients(s: &mut Setup, x: &[f64]) -> Result<Vec<ParamVector>> {
    (0..s.cfg.workers).map(|n| s.gradient(n, x)).collect()
}

/// Synchronous minibatch SGD over `N` workers in one of three equivalent
/// implementations.
pub fn run_mb_sgd(cfg: &TrainerConfig, obj: &Objective) -> Result<RunMetrics> {
    let mut s = Setup::new(cfg, obj)?;
    let n = cfg.workers;
    let inputs = super::LrInputs {
        sigma: Some(s.worker_sigma()? / (n as f64).sqrt()),
        ..s.base_inputs()
    };
    let gamma = s.gamma(LrRule::Sgd, inputs)?;
    let kind = cfg.collective;
    let round = if n > 1 {
        timing(&s, kind, Compressor::Identity)?
    } else {
        RoundTiming::none()
    };
    let step_time = cfg.network.slowest_compute(n) + round.comm;
    let mut x = s.x0()?;
    let mut rec = Recorder::new(obj);
    for _ in 0..cfg.iterations {
        let grads = worker_gradients(&mut s, &x)?;
        match cfg.implementation {
            MbImplementation::GradientAgg | MbImplementation::GlobalReplica => {
                let g = if n > 1 {
                    collectives::average(kind, &grads)?
                } else {
                    grads.into_iter().next().expect("one worker")
                };
                vecops::step(&mut x, gamma, &g);
            }
            MbImplementation::ModelAgg => {
                let locals: Vec<ParamVector> = grads
                    .iter()
                    .map(|g| {
                        let mut y = x.clone();
                        vecops::step(&mut y, gamma, g);
                        y
                    })
                    .collect();
                x = if n > 1 {
                    collectives::average(kind, &locals)?
                } else {
                    locals.into_iter().next().expect("one worker")
                };
            }
        }
        rec.clock += step_time;
        rec.bytes += round.bytes;
        rec.record(&x, 0.0)?;
    }
    let rounds = if n > 1 { cfg.iterations } else { 0 };
    let mut m = s.finish(gamma, rec);
    round.apply(&mut m, rounds);
    Ok(m)
}

/// Compressed SGD: `ps` form quantizes once up and once down per partition,
/// `ring` form re-quantizes the running sum at every hop.
pub fn run_csgd(cfg: &TrainerConfig, obj: &Objective) -> Result<RunMetrics> {
    let mut s = Setup::new(cfg, obj)?;
    let inputs = super::LrInputs {
        sigma: Some(s.worker_sigma()?),
        sigma_prime: Some(s.sigma_prime()?),
        ..s.base_inputs()
    };
    let gamma = s.gamma(LrRule::Csgd, inputs)?;
    let kind = match cfg.form {
        CsgdForm::Ps => CollectiveKind::PsMulti,
        CsgdForm::Ring => CollectiveKind::AllreduceRingPartitioned,
    };
    let round = timing(&s, kind, cfg.compressor.clone())?;
    let step_time = cfg.network.slowest_compute(cfg.workers) + round.comm;
    let mut x = s.x0()?;
    let mut rec = Recorder::new(obj);
    for _ in 0..cfg.iterations {
        let grads = worker_gradients(&mut s, &x)?;
        let g = collectives::compressed_mean(kind, &grads, &cfg.compressor, &mut s.comp_rngs, &mut s.server_rng)?;
        vecops::step(&mut x, gamma, &g);
        rec.clock += step_time;
        rec.bytes += round.bytes;
        rec.record(&x, 0.0)?;
    }
    let mut m = s.finish(gamma, rec);
    round.apply(&mut m, cfg.iterations);
    Ok(m)
}

/// Error-compensated SGD through a single parameter server.
///
/// Workers send `Q(v_n)` with `v_n = g_n + delta_n`; the server sends `Q(v)`
/// with `v = mean_n Q(v_n) + delta`. Each step also checks that
/// `x_tilde = x - gamma * Omega` (with `Omega = delta + mean_n delta_n`)
/// moves exactly like uncompressed minibatch SGD.
pub fn run_ec_sgd(cfg: &TrainerConfig, obj: &Objective) -> Result<RunMetrics> {
    let mut s = Setup::new(cfg, obj)?;
    let n = cfg.workers;
    let d = s.dim();
    let inputs = super::LrInputs {
        sigma: Some(s.worker_sigma()?),
        sigma_prime: Some(s.sigma_prime()?),
        ..s.base_inputs()
    };
    let gamma = s.gamma(LrRule::EcSgd, inputs)?;
    let round = timing(&s, CollectiveKind::PsSingle, cfg.compressor.clone())?;
    let step_time = cfg.network.slowest_compute(n) + round.comm;
    let mut x = s.x0()?;
    let mut worker_delta = vec![vec![0.0; d]; n];
    let mut server_delta = vec![0.0; d];
    let mut x_tilde = x.clone();
    let mut worst: f64 = 0.0;
    let mut rec = Recorder::new(obj);
    for _ in 0..cfg.iterations {
        let grads = worker_gradients(&mut s, &x)?;
        let mut sent = Vec::with_capacity(n);
        for (w, g) in grads.iter().enumerate() {
            let mut v = g.clone();
            vecops::add_assign(&mut v, &worker_delta[w]);
            let q = cfg.compressor.compress(&v, &mut s.comp_rngs[w])?;
            worker_delta[w] = vecops::sub(&v, &q);
            sent.push(q);
        }
        let mut v = vecops::mean(d, sent.iter().map(|q| q.as_slice()));
        vecops::add_assign(&mut v, &server_delta);
        let q = cfg.compressor.compress(&v, &mut s.server_rng)?;
        server_delta = vecops::sub(&v, &q);
        vecops::step(&mut x, gamma, &q);

        let mut expected = x_tilde.clone();
        vecops::step(&mut expected, gamma, &vecops::mean(d, grads.iter().map(|g| g.as_slice())));
        let mut omega = vecops::mean(d, worker_delta.iter().map(|v| v.as_slice()));
        vecops::add_assign(&mut omega, &server_delta);
        let mut next_tilde = x.clone();
        vecops::step(&mut next_tilde, gamma, &omega);
        worst = worst.max(vecops::norm(&vecops::sub(&next_tilde, &expected)));
        x_tilde = next_tilde;

        rec.clock += step_time;
        rec.bytes += round.bytes;
        rec.record(&x, 0.0)?;
    }
    let mut m = s.finish(gamma, rec);
    round.apply(&mut m, cfg.iterations);
    m.lemma_residual_max = Some(worst);
    Ok(m)
}
