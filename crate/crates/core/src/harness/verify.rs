//! Self-check suites runnable from the command line. Each check reports a
//! name, a verdict and a human-readable detail line.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::collectives::{self, CollectiveKind, SizeModel};
use crate::compression::{quantize_rq, sparsify, Compressor};
use crate::error::{Error, Result};
use crate::netsim::{simulate, NetworkParams, SendRequest};
use crate::objective::{Objective, ObjectiveSpec};
use crate::rng;
use crate::time::SimTime;
use crate::topology::TopologyKind;
use crate::trainers::{self, Algorithm, MbImplementation, NetworkConfig, RunMetrics, TrainerConfig};
use crate::vecops;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Costs,
    Unbiasedness,
    Lemmas,
    Equivalences,
    Trends,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Costs,
        Suite::Unbiasedness,
        Suite::Lemmas,
        Suite::Equivalences,
        Suite::Trends,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Costs => "costs",
            Suite::Unbiasedness => "unbiasedness",
            Suite::Lemmas => "lemmas",
            Suite::Equivalences => "equivalences",
            Suite::Trends => "trends",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown suite `{s}` (expected costs, unbiasedness, lemmas, equivalences or trends)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn verify(suite: Suite) -> Result<Report> {
    let checks = match suite {
        Suite::Costs => costs()?,
        Suite::Unbiasedness => unbiasedness()?,
        Suite::Lemmas => lemmas()?,
        Suite::Equivalences => equivalences()?,
        Suite::Trends => trends()?,
    };
    Ok(Report {
        suite: suite.name().into(),
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}

fn int(n: i64) -> SimTime {
    SimTime::from_integer(n)
}

/// Three 1-unit messages on a switch with latency 3/2 and 5 time units per
/// unit of size; `scale` shrinks every message.
pub fn example_workload(scale: SimTime) -> (NetworkParams, Vec<SendRequest>) {
    let params = NetworkParams::new(SimTime::new(3, 2), int(5), 3);
    let reqs = vec![
        SendRequest::new(int(5), 0, 1, scale, "A"),
        SendRequest::new(int(6), 1, 0, scale, "B"),
        SendRequest::new(int(6), 2, 0, scale, "C"),
    ];
    (params, reqs)
}

fn costs() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let finish = |scale: SimTime| -> Result<SimTime> {
        let (p, r) = example_workload(scale);
        simulate(p, &r)?.makespan()
    };
    let full = finish(int(1))?;
    let half = finish(SimTime::new(1, 2))?;
    out.push(Check::new("example-full", full == int(14), format!("makespan {}", full.exact_string())));
    out.push(Check::new("example-half", half == int(9), format!("makespan {}", half.exact_string())));
    let speedup = full / half;
    out.push(Check::new(
        "example-speedup",
        speedup == SimTime::new(14, 9),
        format!("speedup {}", speedup.exact_string()),
    ));

    let params = NetworkParams::new(SimTime::new(3, 2), SimTime::new(1, 4), 1);
    let sizes = SizeModel::raw(int(1));
    for kind in CollectiveKind::ALL {
        let mut bad = Vec::new();
        let mut count = 0;
        for w in [2, 4, 8, 16] {
            if w < kind.min_workers() {
                continue;
            }
            for d in [1, 4, 64] {
                let c = collectives::round_cost(kind, w, d, &params, &sizes)?;
                count += 1;
                if c.simulated_cost != c.closed_form_cost {
                    bad.push(format!(
                        "W={w} d={d}: simulated {} closed {}",
                        c.simulated_cost.exact_string(),
                        c.closed_form_cost.exact_string()
                    ));
                }
            }
        }
        let detail = if bad.is_empty() {
            format!("{count} cases exact")
        } else {
            bad.join("; ")
        };
        out.push(Check::new(format!("closed-form/{}", kind.label()), bad.is_empty(), detail));
    }

    let obj = Objective::generate(&ObjectiveSpec::least_squares(64, 8, 3, 0.5))?;
    let net = NetworkConfig {
        latency: SimTime::new(3, 2),
        transfer_per_unit: SimTime::new(1, 4),
        ..NetworkConfig::default()
    };
    let cfg = TrainerConfig::new(Algorithm::KStepAvg, 10).workers(4).k(3).gamma(0.05).network(net);
    let m = trainers::run(&cfg, &obj)?;
    let per = m.round_simulated.unwrap_or(SimTime::ZERO);
    let expect = collectives::k_step_comm_cost(10, 3, per)?;
    out.push(Check::new(
        "k-step-total",
        m.comm_rounds == 4 && per > SimTime::ZERO && m.total_comm_time == expect,
        format!("{} rounds, total {}", m.comm_rounds, m.total_comm_time.exact_string()),
    ));
    Ok(out)
}

const TRIALS: usize = 100_000;

/// Per-element Monte Carlo test: each coordinate's mean error lies within
/// four standard errors. Errors are accumulated relative to the input so
/// deterministic coordinates sum exactly.
fn unbiased_within(x: &[f64], mut sample: impl FnMut() -> Result<Vec<f64>>) -> Result<(bool, f64)> {
    let d = x.len();
    let mut sum = vec![0.0; d];
    let mut sum_sq = vec![0.0; d];
    for _ in 0..TRIALS {
        let q = sample()?;
        for i in 0..d {
            let e = q[i] - x[i];
            sum[i] += e;
            sum_sq[i] += e * e;
        }
    }
    let n = TRIALS as f64;
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for i in 0..d {
        let bias = sum[i] / n;
        let var = (sum_sq[i] / n - bias * bias).max(0.0) * n / (n - 1.0);
        let se = (var / n).sqrt();
        if se == 0.0 {
            ok &= bias.abs() <= 1e-12 * x[i].abs().max(1.0);
        } else {
            worst = worst.max(bias.abs() / se);
            ok &= bias.abs() <= 4.0 * se;
        }
    }
    Ok((ok, worst))
}

fn unbiasedness() -> Result<Vec<Check>> {
    let x = [0.9, -1.3, 0.05, 2.2, -0.4, 1.1, 0.0, -2.0];
    let mut out = Vec::new();
    for bits in [1u32, 2, 4, 8] {
        let mut r = rng::seeded(1000 + u64::from(bits));
        let mut on_grid = true;
        let (ok, worst) = unbiased_within(&x, || {
            let (enc, q) = quantize_rq(&x, bits, &mut r)?;
            on_grid &= enc.decode() == q && enc.levels.iter().all(|&l| u64::from(l) < 1u64 << bits);
            Ok(q)
        })?;
        out.push(Check::new(format!("rq-b{bits}"), ok, format!("max |err|/se {worst:.3}")));
        out.push(Check::new(format!("rq-b{bits}-knobs"), on_grid, "every output on the knob grid"));
    }
    for p in [0.1, 0.5, 0.9] {
        let mut r = rng::seeded(2000 + (p * 10.0) as u64);
        let (ok, worst) = unbiased_within(&x, || sparsify(&x, p, &mut r))?;
        out.push(Check::new(format!("sparsify-p{p}"), ok, format!("max |err|/se {worst:.3}")));
    }
    Ok(out)
}

/// Population variance of the batch mean over every size-`b` subset of
/// `values`, enumerated by bitmask.
pub fn enumerated_batch_variance(values: &[f64], b: usize) -> f64 {
    let m = values.len();
    let means: Vec<f64> = (0u32..1 << m)
        .filter(|mask| mask.count_ones() as usize == b)
        .map(|mask| (0..m).filter(|i| mask >> i & 1 == 1).map(|i| values[i]).sum::<f64>() / b as f64)
        .collect();
    let mu = means.iter().sum::<f64>() / means.len() as f64;
    means.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / means.len() as f64
}

fn lemmas() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut worst: f64 = 0.0;
    for m in 2..=8usize {
        let values: Vec<f64> = (0..m).map(|i| ((i * i) as f64 * 0.37).sin() * 3.0 + i as f64).collect();
        let mu = values.iter().sum::<f64>() / m as f64;
        let var = values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / m as f64;
        for b in 1..=m {
            let law = (m - b) as f64 / (m - 1) as f64 * var / b as f64;
            worst = worst.max((enumerated_batch_variance(&values, b) - law).abs());
        }
    }
    out.push(Check::new("without-replacement-law", worst <= 1e-12, format!("max deviation {worst:e}")));
    let small = enumerated_batch_variance(&[0.0, 1.0, 2.0], 2);
    out.push(Check::new(
        "without-replacement-m3-b2",
        (small - 1.0 / 6.0).abs() <= 1e-12,
        format!("variance {small}"),
    ));

    let obj = Objective::generate(&ObjectiveSpec::least_squares(64, 16, 5, 0.5))?;
    for (name, c) in [
        ("clipping-k40", Compressor::Clipping { k: 40 }),
        ("rq-b2", Compressor::RandomizedQuantization { bits: 2 }),
    ] {
        let cfg = TrainerConfig::new(Algorithm::EcSgd, 100).workers(4).gamma(0.02).seed(1).compressor(c);
        let r = trainers::run(&cfg, &obj)?.lemma_residual_max.unwrap_or(f64::INFINITY);
        out.push(Check::new(format!("ec-identity/{name}"), r <= 1e-10, format!("max residual {r:e}")));
    }
    Ok(out)
}

fn max_diff(a: &RunMetrics, b: &RunMetrics) -> f64 {
    if a.trajectory.len() != b.trajectory.len() {
        return f64::INFINITY;
    }
    a.trajectory
        .iter()
        .zip(&b.trajectory)
        .map(|(x, y)| vecops::max_abs_diff(x, y))
        .fold(0.0, f64::max)
}

fn equivalences() -> Result<Vec<Check>> {
    let obj = Objective::generate(&ObjectiveSpec::least_squares(64, 8, 3, 0.5))?;
    let base = TrainerConfig::new(Algorithm::MbSgd, 500).workers(4).batch(2).gamma(0.05).seed(11);
    let run = |c: &TrainerConfig| trainers::run(c, &obj);
    let with = |alg| TrainerConfig { algorithm: alg, ..base.clone() };
    let pairs: Vec<(&str, TrainerConfig, TrainerConfig)> = vec![
        (
            "csgd(identity)=mb-sgd",
            base.clone().collective(CollectiveKind::PsMulti),
            with(Algorithm::Csgd),
        ),
        (
            "ec-sgd(identity)=mb-sgd",
            base.clone().collective(CollectiveKind::PsSingle),
            with(Algorithm::EcSgd),
        ),
        (
            "gradient-agg=model-agg",
            base.clone(),
            base.clone().implementation(MbImplementation::ModelAgg),
        ),
        (
            "gradient-agg=global-replica",
            base.clone().collective(CollectiveKind::PsSingle),
            base.clone()
                .collective(CollectiveKind::PsSingle)
                .implementation(MbImplementation::GlobalReplica),
        ),
        (
            "asgd(N=1)=sgd",
            TrainerConfig::new(Algorithm::Sgd, 500).batch(2).gamma(0.05).seed(11),
            TrainerConfig::new(Algorithm::Asgd, 500).batch(2).gamma(0.05).seed(11).tau(0),
        ),
        (
            "dsgd(fully-connected)=mb-sgd",
            base.clone().implementation(MbImplementation::ModelAgg),
            with(Algorithm::Dsgd).topology(TopologyKind::FullyConnected),
        ),
        (
            "k-step(K=1)=mb-sgd(model-agg)",
            base.clone().implementation(MbImplementation::ModelAgg),
            with(Algorithm::KStepAvg).k(1),
        ),
    ];
    pairs
        .into_iter()
        .map(|(name, a, b)| {
            let d = max_diff(&run(&a)?, &run(&b)?);
            Ok(Check::new(name, d <= 1e-10, format!("max |diff| {d:e}")))
        })
        .collect()
}

/// Seeded convex instance used by the trend checks.
pub fn trend_instance(noise: f64) -> Result<Objective> {
    Objective::generate(&ObjectiveSpec::least_squares(256, 16, 7, noise))
}

fn trends() -> Result<Vec<Check>> {
    let obj = trend_instance(1.0)?;
    let mut out = Vec::new();

    let short = trainers::run(&TrainerConfig::new(Algorithm::Gd, 1000), &obj)?.criterion();
    let long = trainers::run(&TrainerConfig::new(Algorithm::Gd, 2000), &obj)?.criterion();
    let ratio = long / short;
    out.push(Check::new("gd-criterion-halves", ratio <= 0.6, format!("ratio {ratio:.4}")));

    let mut wins = 0;
    let seeds = 20;
    for seed in 0..seeds {
        let cfg = TrainerConfig::new(Algorithm::MbSgd, 2000).gamma(0.05).seed(seed);
        let one = trainers::run(&cfg, &obj)?.tail_criterion(0.5);
        let eight = trainers::run(&cfg.workers(8), &obj)?.tail_criterion(0.5);
        wins += usize::from(eight < one);
    }
    let p = sign_test_p(wins, seeds as usize);
    out.push(Check::new("mb-sgd-speedup", p < 0.05, format!("{wins}/{seeds} wins, p={p:.2e}")));

    let clean = trend_instance(0.0)?;
    let cfg = TrainerConfig::new(Algorithm::Dsgd, 2000)
        .workers(8)
        .gamma(0.05)
        .topology(TopologyKind::Ring);
    let c = trainers::run(&cfg, &clean)?.final_consensus();
    out.push(Check::new("dsgd-consensus", c < 1e-3, format!("final consensus {c:e}")));

    let tau = 3;
    let bound = (5000.0f64).sqrt() * obj.sigma_bound() / obj.smoothness().sqrt();
    let (mut sync, mut asyn) = (0.0, 0.0);
    for seed in 0..5 {
        sync += trainers::run(&TrainerConfig::new(Algorithm::Sgd, 5000).seed(seed), &obj)?.criterion();
        asyn += trainers::run(
            &TrainerConfig::new(Algorithm::Asgd, 5000).workers(4).tau(tau).seed(seed),
            &obj,
        )?
        .criterion();
    }
    let r = asyn / sync;
    out.push(Check::new(
        "asgd-matches-sgd",
        (tau as f64) <= bound && (r - 1.0).abs() <= 0.25,
        format!("tau {tau} <= {bound:.1}, criterion ratio {r:.4}"),
    ));
    Ok(out)
}

/// One-sided exact sign test: P(X >= wins) for X ~ Binomial(n, 1/2).
pub fn sign_test_p(wins: usize, n: usize) -> f64 {
    let mut c = 1.0f64;
    let mut tail = 0.0;
    for k in 0..=n {
        if k >= wins {
            tail += c;
        }
        c = c * (n - k) as f64 / (k + 1) as f64;
    }
    tail / 2f64.powi(n as i32)
}
