use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::collectives::CollectiveKind;
use crate::compression::Compressor;
use crate::error::{Error, Result};
use crate::sampling::SamplingMode;
use crate::time::SimTime;
use crate::topology::TopologyKind;
use crate::vecops::ParamVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Gd,
    Sgd,
    MbSgd,
    Csgd,
    EcSgd,
    Asgd,
    Dsgd,
    KStepAvg,
}

impl Algorithm {
    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Gd => "gd",
            Algorithm::Sgd => "sgd",
            Algorithm::MbSgd => "mb-sgd",
            Algorithm::Csgd => "csgd",
            Algorithm::EcSgd => "ec-sgd",
            Algorithm::Asgd => "asgd",
            Algorithm::Dsgd => "dsgd",
            Algorithm::KStepAvg => "k-step-avg",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MbImplementation {
    #[default]
    GradientAgg,
    ModelAgg,
    GlobalReplica,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CsgdForm {
    #[default]
    Ps,
    Ring,
}

/// A fixed step size or `"auto"` for the algorithm's theorem rate.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum LearningRate {
    #[default]
    Auto,
    Fixed(f64),
}

impl Serialize for LearningRate {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            LearningRate::Auto => s.serialize_str("auto"),
            LearningRate::Fixed(g) => s.serialize_f64(*g),
        }
    }
}

impl<'de> Deserialize<'de> for LearningRate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(g) => Ok(LearningRate::Fixed(g)),
            Raw::Text(t) if t == "auto" => Ok(LearningRate::Auto),
            Raw::Text(t) => t
                .parse()
                .map(LearningRate::Fixed)
                .map_err(|_| serde::de::Error::custom(format!("gamma must be a number or \"auto\", got {t:?}"))),
        }
    }
}

fn one() -> usize {
    1
}

fn unit() -> SimTime {
    SimTime::from_integer(1)
}

fn default_collective() -> CollectiveKind {
    CollectiveKind::AllreduceRingPartitioned
}

fn default_topology() -> TopologyKind {
    TopologyKind::Ring
}

/// Link and compute timing shared by all simulated workers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default, alias = "t_latency")]
    pub latency: SimTime,
    #[serde(default, alias = "t_transfer_per_unit")]
    pub transfer_per_unit: SimTime,
    #[serde(default = "unit")]
    pub unit_per_element: SimTime,
    /// Time for one minibatch gradient on a worker.
    #[serde(default)]
    pub compute_time: SimTime,
    /// Per-worker multipliers of `compute_time`; empty means all 1.
    #[serde(default)]
    pub compute_factors: Vec<SimTime>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            latency: SimTime::ZERO,
            transfer_per_unit: SimTime::ZERO,
            unit_per_element: unit(),
            compute_time: SimTime::ZERO,
            compute_factors: Vec::new(),
        }
    }
}

impl NetworkConfig {
    pub fn compute_time_of(&self, worker: usize) -> SimTime {
        match self.compute_factors.get(worker) {
            Some(f) => self.compute_time * *f,
            None => self.compute_time,
        }
    }

    pub fn slowest_compute(&self, workers: usize) -> SimTime {
        (0..workers)
            .map(|n| self.compute_time_of(n))
            .max()
            .unwrap_or(SimTime::ZERO)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerConfig {
    pub algorithm: Algorithm,
    #[serde(alias = "T")]
    pub iterations: usize,
    #[serde(default = "one", alias = "N")]
    pub workers: usize,
    #[serde(default = "one", alias = "B")]
    pub batch: usize,
    #[serde(default)]
    pub sampling: SamplingMode,
    #[serde(default)]
    pub gamma: LearningRate,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub compressor: Compressor,
    #[serde(default = "default_collective")]
    pub collective: CollectiveKind,
    #[serde(default)]
    pub implementation: MbImplementation,
    #[serde(default)]
    pub form: CsgdForm,
    #[serde(default, alias = "tau_max")]
    pub tau: Option<usize>,
    #[serde(default, alias = "K")]
    pub k: Option<usize>,
    #[serde(default = "default_topology")]
    pub topology: TopologyKind,
    #[serde(default)]
    pub network: NetworkConfig,
    /// Initial model shared by every worker; zeros when absent.
    #[serde(default)]
    pub x0: Option<ParamVector>,
}

impl TrainerConfig {
    pub fn new(algorithm: Algorithm, iterations: usize) -> Self {
        TrainerConfig {
            algorithm,
            iterations,
            workers: 1,
            batch: 1,
            sampling: SamplingMode::default(),
            gamma: LearningRate::Auto,
            seed: 0,
            compressor: Compressor::Identity,
            collective: default_collective(),
            implementation: MbImplementation::default(),
            form: CsgdForm::default(),
            tau: None,
            k: None,
            topology: default_topology(),
            network: NetworkConfig::default(),
            x0: None,
        }
    }

    pub fn workers(mut self, n: usize) -> Self {
        self.workers = n;
        self
    }

    pub fn batch(mut self, b: usize) -> Self {
        self.batch = b;
        self
    }

    pub fn gamma(mut self, g: f64) -> Self {
        self.gamma = LearningRate::Fixed(g);
        self
    }

    pub fn seed(mut self, s: u64) -> Self {
        self.seed = s;
        self
    }

    pub fn compressor(mut self, c: Compressor) -> Self {
        self.compressor = c;
        self
    }

    pub fn collective(mut self, c: CollectiveKind) -> Self {
        self.collective = c;
        self
    }

    pub fn implementation(mut self, i: MbImplementation) -> Self {
        self.implementation = i;
        self
    }

    pub fn form(mut self, f: CsgdForm) -> Self {
        self.form = f;
        self
    }

    pub fn tau(mut self, tau: usize) -> Self {
        self.tau = Some(tau);
        self
    }

    pub fn k(mut self, k: usize) -> Self {
        self.k = Some(k);
        self
    }

    pub fn topology(mut self, t: TopologyKind) -> Self {
        self.topology = t;
        self
    }

    pub fn network(mut self, n: NetworkConfig) -> Self {
        self.network = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.batch == 0 {
            return bad("batch must be at least 1".into());
        }
        if let LearningRate::Fixed(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return bad(format!("gamma must be positive, got {g}"));
            }
        }
        self.compressor.validate().map_err(|e| Error::Config(e.to_string()))?;
        let net = &self.network;
        if net.latency.is_negative() || net.transfer_per_unit.is_negative() || net.compute_time.is_negative() {
            return bad("network times must be non-negative".into());
        }
        if net.unit_per_element <= SimTime::ZERO {
            return bad("unit_per_element must be positive".into());
        }
        if !net.compute_factors.is_empty() && net.compute_factors.len() != self.workers {
            return bad(format!(
                "compute_factors has {} entries for {} workers",
                net.compute_factors.len(),
                self.workers
            ));
        }
        if net.compute_factors.iter().any(|f| f.is_negative()) {
            return bad("compute factors must be non-negative".into());
        }
        let single = matches!(self.algorithm, Algorithm::Gd | Algorithm::Sgd);
        if single && self.workers != 1 {
            return bad(format!("{} runs on a single worker", self.algorithm.label()));
        }
        if !self.compressor.is_identity()
            && !matches!(self.algorithm, Algorithm::Csgd | Algorithm::EcSgd)
        {
            return bad(format!("{} does not compress; remove the compressor", self.algorithm.label()));
        }
        match self.algorithm {
            Algorithm::MbSgd => {
                if self.workers > 1 && !self.collective.is_sum() {
                    return bad(format!("{} cannot aggregate", self.collective.label()));
                }
                if self.implementation == MbImplementation::GlobalReplica
                    && self.workers > 1
                    && !matches!(self.collective, CollectiveKind::PsSingle | CollectiveKind::PsMulti)
                {
                    return bad("global-replica needs a parameter-server collective".into());
                }
                if self.workers > 1 && self.workers < self.collective.min_workers() {
                    return bad(format!("{} needs more workers", self.collective.label()));
                }
            }
            Algorithm::Csgd | Algorithm::EcSgd if self.workers < 2 => {
                return bad(format!("{} needs at least 2 workers", self.algorithm.label()));
            }
            Algorithm::Asgd if self.tau.is_none() => {
                return bad("asgd needs tau".into());
            }
            Algorithm::KStepAvg => match self.k {
                None => return bad("k-step-avg needs k".into()),
                Some(0) => return bad("k must be at least 1".into()),
                _ => {}
            },
            _ => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_parsing() {
        #[derive(Deserialize)]
        struct W {
            gamma: LearningRate,
        }
        let w: W = serde_json::from_str(r#"{"gamma":"auto"}"#).unwrap();
        assert_eq!(w.gamma, LearningRate::Auto);
        let w: W = serde_json::from_str(r#"{"gamma":0.5}"#).unwrap();
        assert_eq!(w.gamma, LearningRate::Fixed(0.5));
        assert!(serde_json::from_str::<W>(r#"{"gamma":"fast"}"#).is_err());
    }

    #[test]
    fn validation() {
        assert!(TrainerConfig::new(Algorithm::Gd, 10).validate().is_ok());
        assert!(TrainerConfig::new(Algorithm::Gd, 10).workers(2).validate().is_err());
        assert!(TrainerConfig::new(Algorithm::Asgd, 10).validate().is_err());
        assert!(TrainerConfig::new(Algorithm::KStepAvg, 10).k(0).validate().is_err());
        assert!(TrainerConfig::new(Algorithm::Sgd, 10).gamma(-1.0).validate().is_err());
        assert!(TrainerConfig::new(Algorithm::MbSgd, 10)
            .workers(4)
            .implementation(MbImplementation::GlobalReplica)
            .validate()
            .is_err());
    }
}
