//! `sgdlab` command line: run experiment configs, self-check suites and
//! print closed-form communication cost tables.
//!
//! Exit codes: 0 success, 1 invalid input or a failed check, 2 runtime error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sgdlab::collectives::CollectiveKind;
use sgdlab::harness::{self, verify, CostTableSpec};
use sgdlab::{Error, SimTime};

#[derive(Parser)]
#[command(name = "sgdlab", version, about = "Simulated distributed SGD laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every trainer of a TOML or JSON experiment config over its seeds.
    Run {
        config: PathBuf,
        /// Output directory; overrides the config and SGDLAB_OUT_DIR.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a self-check suite and print a JSON report.
    Verify {
        /// One of: costs, unbiasedness, lemmas, equivalences, trends.
        suite: String,
    },
    /// Print simulated and closed-form per-round costs of every collective.
    Costs {
        /// Worker counts, comma separated.
        #[arg(long = "N", value_delimiter = ',', required = true)]
        workers: Vec<usize>,
        /// Per-message latency, e.g. 1.5 or 3/2.
        #[arg(long)]
        lat: SimTime,
        /// Transfer time per unit of size.
        #[arg(long)]
        tr: SimTime,
        /// Vector lengths in elements, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "1,4,64")]
        sizes: Vec<usize>,
        /// Emit JSON instead of a text table.
        #[arg(long)]
        json: bool,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::InvalidArgument(_)
        | Error::InvalidMatrix(_)
        | Error::MissingConstant(_)
        | Error::DimensionMismatch { .. } => 1,
        _ => 2,
    }
}

fn execute(cmd: Command) -> Result<bool, Error> {
    match cmd {
        Command::Run { config, out } => {
            let report = match out {
                Some(dir) => {
                    let cfg = harness::ExperimentConfig::load(&config)?;
                    harness::run_config(&cfg, &dir)?
                }
                None => harness::run_experiment(&config)?,
            };
            for row in &report.summary.rows {
                println!(
                    "{:<12} N={:<3} criterion={:.6e} time/iter={:.4} bytes={}",
                    row.algorithm, row.workers, row.mean_criterion, row.per_iteration_time, row.total_bytes
                );
            }
            for run in &report.summary.runs {
                for w in &run.warnings {
                    eprintln!("warning: trainer {} seed {}: {w}", run.trainer, run.seed);
                }
            }
            if let Some(ok) = report.summary.exact_match {
                println!("cost table exact_match: {ok}");
            }
            println!("wrote {} files to {}", report.files.len(), report.out_dir.display());
            Ok(report.summary.exact_match.unwrap_or(true))
        }
        Command::Verify { suite } => {
            let report = verify::verify(suite.parse()?)?;
            println!("{}", report.to_json()?);
            Ok(report.passed)
        }
        Command::Costs {
            workers,
            lat,
            tr,
            sizes,
            json,
        } => {
            let spec = CostTableSpec {
                workers,
                sizes,
                kinds: CollectiveKind::ALL.to_vec(),
                latency: lat,
                transfer_per_unit: tr,
                unit_per_element: SimTime::from_integer(1),
            };
            let rows = harness::cost_table(&spec)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&rows)?);
            } else {
                println!("{:<28} {:>4} {:>6} {:>14} {:>14} match", "collective", "W", "d", "closed", "simulated");
                for r in &rows {
                    println!(
                        "{:<28} {:>4} {:>6} {:>14} {:>14} {}",
                        r.kind, r.workers, r.size, r.closed_form, r.simulated, r.exact_match
                    );
                }
            }
            Ok(rows.iter().all(|r| r.exact_match))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
