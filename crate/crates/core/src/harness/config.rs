use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::collectives::CollectiveKind;
use crate::error::{Error, Result};
use crate::objective::ObjectiveSpec;
use crate::time::SimTime;
use crate::topology::TopologyKind;
use crate::trainers::TrainerConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Emit {
    Csv,
    Json,
    Timeline,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_output_dir() -> String {
    "out".into()
}

fn default_emit() -> Vec<Emit> {
    vec![Emit::Csv, Emit::Json]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    #[serde(default = "default_emit")]
    pub emit: Vec<Emit>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            seeds: default_seeds(),
            output_dir: default_output_dir(),
            emit: default_emit(),
        }
    }
}

fn default_table_workers() -> Vec<usize> {
    vec![2, 4, 8, 16]
}

fn default_table_sizes() -> Vec<usize> {
    vec![1, 4, 64]
}

fn default_table_kinds() -> Vec<CollectiveKind> {
    CollectiveKind::ALL.to_vec()
}

fn unit() -> SimTime {
    SimTime::from_integer(1)
}

/// Simulated vs closed-form cost for every (collective, W, size) triple.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostTableSpec {
    #[serde(default = "default_table_workers")]
    pub workers: Vec<usize>,
    /// Vector lengths in elements.
    #[serde(default = "default_table_sizes")]
    pub sizes: Vec<usize>,
    #[serde(default = "default_table_kinds")]
    pub kinds: Vec<CollectiveKind>,
    pub latency: SimTime,
    pub transfer_per_unit: SimTime,
    #[serde(default = "unit")]
    pub unit_per_element: SimTime,
}

/// One experiment file: an objective, one trainer (`[trainer]`) or a sweep
/// (`[[trainers]]`), seeds and outputs, and an optional cost table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub objective: Option<ObjectiveSpec>,
    #[serde(default)]
    pub trainer: Option<TrainerConfig>,
    #[serde(default)]
    pub trainers: Vec<TrainerConfig>,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub cost_table: Option<CostTableSpec>,
}

fn default_name() -> String {
    "experiment".into()
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn header_line(text: &str, header: &str, nth: usize) -> Option<usize> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| l.split('#').next().unwrap_or("").trim() == header)
        .nth(nth)
        .map(|(i, _)| i + 1)
}

/// Line of the header of trainer `index` in `all_trainers` order.
fn trainer_line(text: &str, index: usize, has_single: bool) -> Option<usize> {
    match (has_single, index) {
        (true, 0) => header_line(text, "[trainer]", 0),
        (true, i) => header_line(text, "[[trainers]]", i - 1),
        (false, i) => header_line(text, "[[trainers]]", i),
    }
}

fn key_line(text: &str, key: &str) -> Option<usize> {
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.starts_with(key) && l[key.len()..].trim_start().starts_with('=')
        })
        .map(|i| i + 1)
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of(text, s.start)).unwrap_or(0);
            Error::Config(format!("line {line}: {}", e.message()))
        })?;
        cfg.validate_with(text)?;
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {}: {e}", e.line())))?;
        cfg.validate_with(text)?;
        Ok(cfg)
    }

    /// Parses by extension: `.json` as JSON, anything else as TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)?
        } else {
            Self::from_toml_str(&text)?
        };
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")))?;
        Ok(cfg)
    }

    /// Makes custom topology paths relative to the config file and checks they exist.
    fn resolve_paths(&mut self, base: &Path) -> Result<()> {
        for t in self.trainers.iter_mut().chain(self.trainer.iter_mut()) {
            if let TopologyKind::Custom { path } = &mut t.topology {
                let p = base.join(&*path);
                if !p.exists() {
                    return Err(Error::Config(format!("topology file {} does not exist", p.display())));
                }
                *path = p.to_string_lossy().into_owned();
            }
        }
        Ok(())
    }

    /// All trainer configurations in file order.
    pub fn all_trainers(&self) -> Vec<TrainerConfig> {
        self.trainer.iter().chain(&self.trainers).cloned().collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with("")
    }

    fn validate_with(&self, text: &str) -> Result<()> {
        let at = |line: Option<usize>, msg: String| {
            Error::Config(match line {
                Some(l) => format!("line {l}: {msg}"),
                None => msg,
            })
        };
        if self.experiment.seeds.is_empty() {
            return Err(at(key_line(text, "seeds"), "at least one seed is required".into()));
        }
        let trainers = self.all_trainers();
        if trainers.is_empty() && self.cost_table.is_none() {
            return Err(at(None, "config needs a [trainer], [[trainers]] or [cost_table] section".into()));
        }
        if !trainers.is_empty() && self.objective.is_none() {
            return Err(at(None, "trainers need an [objective] section".into()));
        }
        if let Some(o) = &self.objective {
            if o.samples == 0 || o.dim == 0 {
                return Err(at(key_line(text, "M").or(key_line(text, "d")), "objective needs M >= 1 and d >= 1".into()));
            }
        }
        for (i, t) in trainers.iter().enumerate() {
            t.validate().map_err(|e| {
                let msg = match e {
                    Error::Config(m) => m,
                    other => other.to_string(),
                };
                at(trainer_line(text, i, self.trainer.is_some()), format!("trainer {i}: {msg}"))
            })?;
        }
        if let Some(c) = &self.cost_table {
            if c.latency.is_negative() || c.transfer_per_unit.is_negative() || c.unit_per_element <= SimTime::ZERO {
                return Err(at(key_line(text, "latency"), "cost table times must be non-negative".into()));
            }
            if c.workers.iter().any(|&w| w < 2) || c.sizes.contains(&0) {
                return Err(at(key_line(text, "workers"), "cost table needs W >= 2 and sizes >= 1".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "gd"

[objective]
kind = "least-squares"
M = 32
d = 4
seed = 1
noise = 0.1

[trainer]
algorithm = "gd"
iterations = 10
"#;

    #[test]
    fn parses_minimal() {
        let c = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.all_trainers().len(), 1);
        assert_eq!(c.experiment.seeds, vec![0]);
    }

    #[test]
    fn syntax_errors_have_lines() {
        let bad = MINIMAL.replace("iterations = 10", "iterations = \"ten\"");
        let e = ExperimentConfig::from_toml_str(&bad).unwrap_err().to_string();
        assert!(e.contains("line 13"), "{e}");
    }

    #[test]
    fn semantic_errors_have_lines() {
        let bad = MINIMAL.replace("iterations = 10", "iterations = 10\nworkers = 3");
        let e = ExperimentConfig::from_toml_str(&bad).unwrap_err().to_string();
        assert!(e.contains("line 11"), "{e}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = MINIMAL.replace("iterations = 10", "iterations = 10\nbogus = 1");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn rational_network_times() {
        let text = format!("{MINIMAL}\n[trainer.network]\nlatency = \"3/2\"\ntransfer_per_unit = 5\n");
        let c = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(c.all_trainers()[0].network.latency, SimTime::new(3, 2));
    }

    #[test]
    fn json_alternative() {
        let c = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_json_str(&text).unwrap(), c);
    }
}
