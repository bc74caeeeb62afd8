use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::collectives::{self, SizeModel};
use crate::error::Result;
use crate::netsim::NetworkParams;
use crate::time::SimTime;
use crate::topology;
use crate::trainers::{Algorithm, RunMetrics, TrainerConfig};

use super::{CostTableSpec, Emit};

pub(crate) fn write_run(out: &Path, emit: &[Emit], index: usize, seed: u64, m: &RunMetrics) -> Result<Vec<PathBuf>> {
    let stem = format!("run-{index:02}-seed{seed}");
    let mut files = Vec::new();
    if emit.contains(&Emit::Csv) {
        let p = out.join(format!("{stem}.csv"));
        std::fs::write(&p, m.to_csv())?;
        files.push(p);
    }
    if emit.contains(&Emit::Timeline) {
        if let Some(tl) = &m.timeline {
            let p = out.join(format!("{stem}-timeline.json"));
            std::fs::write(&p, tl.to_json()?)?;
            files.push(p);
            let p = out.join(format!("{stem}-timeline.csv"));
            std::fs::write(&p, tl.to_csv())?;
            files.push(p);
        }
    }
    Ok(files)
}

/// One seed of one trainer.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub trainer: usize,
    pub seed: u64,
    pub gamma: f64,
    pub criterion: f64,
    pub min_grad_norm_sq: f64,
    pub final_loss: f64,
    pub total_sim_time: f64,
    pub total_bytes: f64,
    /// Bytes implied by the message sizes in the run's timeline(s).
    pub timeline_bytes: Option<f64>,
    pub max_staleness: Option<usize>,
    pub warnings: Vec<String>,
}

/// A trainer aggregated over its seeds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub trainer: usize,
    pub algorithm: String,
    pub workers: usize,
    pub eta: Option<f64>,
    pub k: Option<usize>,
    pub tau: Option<usize>,
    pub rho: Option<f64>,
    pub seeds: usize,
    pub mean_criterion: f64,
    pub per_iteration_time: f64,
    pub total_sim_time: f64,
    pub total_bytes: f64,
    pub comm_rounds: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostRow {
    pub kind: String,
    pub workers: usize,
    pub size: usize,
    pub closed_form: String,
    pub simulated: String,
    pub exact_match: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_match: Option<bool>,
    pub rows: Vec<SummaryRow>,
    pub runs: Vec<RunSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub cost_table: Vec<CostRow>,
}

fn rho_of(t: &TrainerConfig) -> Option<f64> {
    if t.algorithm != Algorithm::Dsgd {
        return None;
    }
    topology::make_matrix(&t.topology, t.workers).ok().map(|m| m.rho())
}

fn timeline_bytes(t: &TrainerConfig, m: &RunMetrics) -> Option<f64> {
    let tl = m.timeline.as_ref()?;
    let sizes = SizeModel::raw(t.network.unit_per_element);
    let per = sizes.bytes_of(tl.total_size());
    Some(if t.algorithm == Algorithm::Asgd {
        per.to_f64()
    } else {
        (per * m.comm_rounds as i64).to_f64()
    })
}

impl Summary {
    pub(crate) fn build(name: &str, runs: &[(usize, TrainerConfig, RunMetrics)], table: Option<Vec<CostRow>>) -> Result<Self> {
        let mut rows: Vec<SummaryRow> = Vec::new();
        let mut out_runs = Vec::new();
        for (i, t, m) in runs {
            out_runs.push(RunSummary {
                trainer: *i,
                seed: t.seed,
                gamma: m.gamma,
                criterion: m.criterion(),
                min_grad_norm_sq: m.min_grad_norm_sq(),
                final_loss: m.records.last().map_or(f64::NAN, |r| r.loss),
                total_sim_time: m.total_sim_time().to_f64(),
                total_bytes: m.total_bytes().to_f64(),
                timeline_bytes: timeline_bytes(t, m),
                max_staleness: m.max_staleness(),
                warnings: m.warnings.clone(),
            });
            let row = match rows.iter_mut().find(|r| r.trainer == *i) {
                Some(r) => r,
                None => {
                    rows.push(SummaryRow {
                        trainer: *i,
                        algorithm: t.algorithm.label().into(),
                        workers: t.workers,
                        eta: m.eta.map(SimTime::to_f64),
                        k: t.k.filter(|_| t.algorithm == Algorithm::KStepAvg),
                        tau: t.tau.filter(|_| t.algorithm == Algorithm::Asgd),
                        rho: rho_of(t),
                        seeds: 0,
                        mean_criterion: 0.0,
                        per_iteration_time: 0.0,
                        total_sim_time: 0.0,
                        total_bytes: 0.0,
                        comm_rounds: m.comm_rounds,
                    });
                    rows.last_mut().expect("just pushed")
                }
            };
            row.seeds += 1;
            row.mean_criterion += m.criterion();
            row.total_sim_time += m.total_sim_time().to_f64();
            row.total_bytes += m.total_bytes().to_f64();
        }
        for r in &mut rows {
            let n = r.seeds as f64;
            r.mean_criterion /= n;
            r.total_sim_time /= n;
            r.total_bytes /= n;
            let iters = runs.iter().find(|(i, _, _)| *i == r.trainer).map_or(1, |(_, t, _)| t.iterations);
            r.per_iteration_time = r.total_sim_time / iters as f64;
        }
        let exact_match = table.as_ref().map(|t| t.iter().all(|r| r.exact_match));
        Ok(Summary {
            name: name.into(),
            exact_match,
            rows,
            runs: out_runs,
            cost_table: table.unwrap_or_default(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Simulates every schedule of the table and compares with its closed form.
pub fn cost_table(spec: &CostTableSpec) -> Result<Vec<CostRow>> {
    let params = NetworkParams::new(spec.latency, spec.transfer_per_unit, 1);
    let sizes = SizeModel::raw(spec.unit_per_element);
    let mut rows = Vec::new();
    for &kind in &spec.kinds {
        for &w in &spec.workers {
            if w < kind.min_workers() {
                continue;
            }
            for &size in &spec.sizes {
                let c = collectives::round_cost(kind, w, size, &params, &sizes)?;
                rows.push(CostRow {
                    kind: kind.label().into(),
                    workers: w,
                    size,
                    closed_form: c.closed_form_cost.exact_string(),
                    simulated: c.simulated_cost.exact_string(),
                    exact_match: c.closed_form_cost == c.simulated_cost,
                });
            }
        }
    }
    Ok(rows)
}
