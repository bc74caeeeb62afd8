//! Experiment runner: parses a config, sweeps trainers over seeds in
//! parallel, and writes per-run CSVs, timelines and a JSON summary.

mod config;
mod output;
pub mod verify;

pub use config::{CostTableSpec, Emit, ExperimentConfig, ExperimentSection};
pub use output::{cost_table, CostRow, RunSummary, Summary, SummaryRow};

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::trainers::{self, RunMetrics, TrainerConfig};

/// Overrides `experiment.output_dir` when set.
pub const OUT_DIR_ENV: &str = "SGDLAB_OUT_DIR";

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub out_dir: PathBuf,
    pub summary: Summary,
    pub files: Vec<PathBuf>,
}

/// Loads and runs a config file. Relative output directories resolve
/// against the config file's directory.
pub fn run_experiment(path: &Path) -> Result<ExperimentReport> {
    let cfg = ExperimentConfig::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let out = match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) => PathBuf::from(dir),
        None => base.join(&cfg.experiment.output_dir),
    };
    run_config(&cfg, &out)
}

/// Every `(trainer index, seed)` pair of a config, in output order.
pub fn run_plan(cfg: &ExperimentConfig) -> Vec<(usize, TrainerConfig)> {
    let mut plan = Vec::new();
    for (i, t) in cfg.all_trainers().into_iter().enumerate() {
        for &seed in &cfg.experiment.seeds {
            plan.push((i, TrainerConfig { seed, ..t.clone() }));
        }
    }
    plan
}

pub fn run_config(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentReport> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let objective = cfg.objective.as_ref().map(Objective::generate).transpose()?;
    let plan = run_plan(cfg);
    let results: Vec<Result<(usize, TrainerConfig, RunMetrics, Vec<PathBuf>)>> = plan
        .into_par_iter()
        .map(|(i, t)| {
            let obj = objective.as_ref().ok_or_else(|| Error::Config("missing objective".into()))?;
            let m = trainers::run(&t, obj)?;
            let files = output::write_run(out, &cfg.experiment.emit, i, t.seed, &m)?;
            Ok((i, t, m, files))
        })
        .collect();
    let mut runs = Vec::with_capacity(results.len());
    let mut files = Vec::new();
    for r in results {
        let (i, t, m, f) = r?;
        files.extend(f);
        runs.push((i, t, m));
    }
    let table = cfg.cost_table.as_ref().map(cost_table).transpose()?;
    let summary = Summary::build(&cfg.name, &runs, table)?;
    if cfg.experiment.emit.contains(&Emit::Json) || cfg.cost_table.is_some() {
        let p = out.join("summary.json");
        std::fs::write(&p, summary.to_json()?)?;
        files.push(p);
    }
    Ok(ExperimentReport {
        out_dir: out.to_path_buf(),
        summary,
        files,
    })
}
