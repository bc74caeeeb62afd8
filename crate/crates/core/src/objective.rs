//! Synthetic finite-sum objectives `f(x) = (1/M) sum_m F_m(x)`.
//!
//! Three families are provided: least squares `F_m = 1/2 (a_m.x - b_m)^2`,
//! logistic regression, and a nonconvex variant of least squares with a
//! bounded cosine perturbation `eps * sum_i cos(x_i)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::vecops::{self, ParamVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    LeastSquares,
    Logistic,
    #[serde(alias = "nonconvex-test")]
    Nonconvex,
}

fn default_perturbation() -> f64 {
    0.1
}

/// Reproducible description of a generated objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    #[serde(rename = "M", alias = "samples")]
    pub samples: usize,
    #[serde(rename = "d", alias = "dim")]
    pub dim: usize,
    pub seed: u64,
    #[serde(default)]
    pub noise: f64,
    /// Cosine perturbation weight; only used by the nonconvex kind.
    #[serde(default = "default_perturbation")]
    pub perturbation: f64,
}

impl ObjectiveSpec {
    pub fn least_squares(samples: usize, dim: usize, seed: u64, noise: f64) -> Self {
        ObjectiveSpec {
            kind: ObjectiveKind::LeastSquares,
            samples,
            dim,
            seed,
            noise,
            perturbation: default_perturbation(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// An immutable finite-sum objective with exact per-sample gradients.
#[derive(Clone, Debug)]
pub struct Objective {
    kind: ObjectiveKind,
    dim: usize,
    features: Vec<ParamVector>,
    targets: Vec<f64>,
    perturbation: f64,
    smoothness: f64,
    minimizer: Option<ParamVector>,
    f_star: Option<f64>,
    reference_points: Vec<ParamVector>,
    sigma_bound: f64,
    spec: Option<ObjectiveSpec>,
}

impl Objective {
    /// Generates data: `a_m ~ N(0, I)`, a planted `x* ~ N(0, I)`, and
    /// `b_m = a_m.x* + noise * N(0,1)` (labels are the sign of that for logistic).
    pub fn generate(spec: &ObjectiveSpec) -> Result<Self> {
        if spec.samples == 0 || spec.dim == 0 {
            return Err(Error::invalid("objective needs M >= 1 and d >= 1"));
        }
        if !(spec.noise >= 0.0) {
            return Err(Error::invalid("noise scale must be non-negative"));
        }
        let mut r = rng::seeded(spec.seed);
        let planted: ParamVector = (0..spec.dim).map(|_| r.sample(StandardNormal)).collect();
        let mut features = Vec::with_capacity(spec.samples);
        let mut targets = Vec::with_capacity(spec.samples);
        for _ in 0..spec.samples {
            let a: ParamVector = (0..spec.dim).map(|_| r.sample(StandardNormal)).collect();
            let eps: f64 = r.sample(StandardNormal);
            let clean = vecops::dot(&a, &planted);
            let b = match spec.kind {
                ObjectiveKind::Logistic => {
                    if clean + spec.noise * eps >= 0.0 {
                        1.0
                    } else {
                        -1.0
                    }
                }
                _ => clean + spec.noise * eps,
            };
            features.push(a);
            targets.push(b);
        }
        let mut obj = Self::build(spec.kind, features, targets, spec.perturbation, spec.seed)?;
        obj.spec = Some(spec.clone());
        Ok(obj)
    }

    /// Builds an objective from explicit per-sample data `(a_m, b_m)`.
    pub fn from_data(
        kind: ObjectiveKind,
        features: Vec<ParamVector>,
        targets: Vec<f64>,
        perturbation: f64,
    ) -> Result<Self> {
        Self::build(kind, features, targets, perturbation, 0)
    }

    fn build(
        kind: ObjectiveKind,
        features: Vec<ParamVector>,
        targets: Vec<f64>,
        perturbation: f64,
        seed: u64,
    ) -> Result<Self> {
        if features.is_empty() || features.len() != targets.len() {
            return Err(Error::invalid("need one target per sample and at least one sample"));
        }
        let dim = features[0].len();
        if dim == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if let Some(bad) = features.iter().find(|a| a.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: bad.len(),
            });
        }
        let m = features.len();
        let a = DMatrix::from_fn(m, dim, |i, j| features[i][j]);
        let gram = (a.transpose() * &a) / m as f64;
        let lambda_max = gram
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(0.0, f64::max);
        let (smoothness, perturbation) = match kind {
            ObjectiveKind::LeastSquares => (lambda_max, 0.0),
            ObjectiveKind::Logistic => (lambda_max / 4.0, 0.0),
            ObjectiveKind::Nonconvex => (lambda_max + perturbation.abs(), perturbation),
        };

        let mut obj = Objective {
            kind,
            dim,
            features,
            targets,
            perturbation,
            smoothness,
            minimizer: None,
            f_star: None,
            reference_points: Vec::new(),
            sigma_bound: 0.0,
            spec: None,
        };

        if kind == ObjectiveKind::LeastSquares {
            let b = DVector::from_vec(obj.targets.clone());
            let svd = a.svd(true, true);
            let x = svd
                .solve(&b, 1e-12)
                .map_err(|e| Error::invalid(format!("least-squares solve failed: {e}")))?;
            let x: ParamVector = x.iter().cloned().collect();
            obj.f_star = Some(obj.value(&x)?);
            obj.minimizer = Some(x);
        }

        let mut refs = vec![vec![0.0; dim]];
        if let Some(x) = &obj.minimizer {
            refs.push(x.clone());
        }
        let mut r = rng::stream(seed, rng::Stream::Probe);
        for _ in 0..4 {
            refs.push((0..dim).map(|_| r.sample(StandardNormal)).collect());
        }
        let mut worst: f64 = 0.0;
        for x in &refs {
            worst = worst.max(obj.sample_variance(x, &obj.all_indices())?);
        }
        obj.sigma_bound = worst.sqrt();
        obj.reference_points = refs;
        Ok(obj)
    }

    pub fn kind(&self) -> ObjectiveKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> usize {
        self.features.len()
    }

    /// Gradient-Lipschitz constant `L`.
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn minimizer(&self) -> Option<&[f64]> {
        self.minimizer.as_deref()
    }

    pub fn f_star(&self) -> Option<f64> {
        self.f_star
    }

    /// `sigma`: square root of the largest per-sample gradient variance seen
    /// at the reference points.
    pub fn sigma_bound(&self) -> f64 {
        self.sigma_bound
    }

    pub fn reference_points(&self) -> &[ParamVector] {
        &self.reference_points
    }

    pub fn spec(&self) -> Option<&ObjectiveSpec> {
        self.spec.as_ref()
    }

    pub fn features(&self, m: usize) -> &[f64] {
        &self.features[m]
    }

    fn all_indices(&self) -> Vec<usize> {
        (0..self.samples()).collect()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    fn check_index(&self, m: usize) -> Result<()> {
        if m >= self.samples() {
            return Err(Error::IndexOutOfRange {
                index: m,
                len: self.samples(),
            });
        }
        Ok(())
    }

    pub fn sample_value(&self, x: &[f64], m: usize) -> Result<f64> {
        self.check_dim(x)?;
        self.check_index(m)?;
        let a = &self.features[m];
        let b = self.targets[m];
        let z = vecops::dot(a, x);
        Ok(match self.kind {
            ObjectiveKind::LeastSquares => 0.5 * (z - b) * (z - b),
            ObjectiveKind::Logistic => softplus(-b * z),
            ObjectiveKind::Nonconvex => {
                0.5 * (z - b) * (z - b) + self.perturbation * x.iter().map(|v| v.cos()).sum::<f64>()
            }
        })
    }

    /// `F'_m(x)`.
    pub fn sample_gradient(&self, x: &[f64], m: usize) -> Result<ParamVector> {
        self.check_dim(x)?;
        self.check_index(m)?;
        let a = &self.features[m];
        let b = self.targets[m];
        let z = vecops::dot(a, x);
        Ok(match self.kind {
            ObjectiveKind::LeastSquares => a.iter().map(|ai| ai * (z - b)).collect(),
            ObjectiveKind::Logistic => {
                let s = -b * sigmoid(-b * z);
                a.iter().map(|ai| ai * s).collect()
            }
            ObjectiveKind::Nonconvex => a
                .iter()
                .zip(x)
                .map(|(ai, xi)| ai * (z - b) - self.perturbation * xi.sin())
                .collect(),
        })
    }

    /// Mean of `F'_m(x)` over `indices`, summed left to right.
    pub fn batch_gradient(&self, x: &[f64], indices: &[usize]) -> Result<ParamVector> {
        if indices.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let grads = indices
            .iter()
            .map(|&m| self.sample_gradient(x, m))
            .collect::<Result<Vec<_>>>()?;
        Ok(vecops::mean(self.dim, grads.iter().map(|g| g.as_slice())))
    }

    pub fn batch_value(&self, x: &[f64], indices: &[usize]) -> Result<f64> {
        if indices.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let mut total = 0.0;
        for &m in indices {
            total += self.sample_value(x, m)?;
        }
        Ok(total / indices.len() as f64)
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.batch_value(x, &self.all_indices())
    }

    /// `f'(x) = (1/M) sum_m F'_m(x)` in fixed index order.
    pub fn full_gradient(&self, x: &[f64]) -> Result<ParamVector> {
        self.batch_gradient(x, &self.all_indices())
    }

    /// `(1/|S|) sum_{m in S} ||F'_m(x) - mean||^2` over the index set `S`.
    pub fn sample_variance(&self, x: &[f64], indices: &[usize]) -> Result<f64> {
        let mean = self.batch_gradient(x, indices)?;
        let mut total = 0.0;
        for &m in indices {
            let g = self.sample_gradient(x, m)?;
            total += vecops::norm_sq(&vecops::sub(&g, &mean));
        }
        Ok(total / indices.len() as f64)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// An objective partitioned into `N` contiguous, near-equal worker shards.
#[derive(Clone, Debug)]
pub struct ShardedObjective {
    parent: Objective,
    shards: Vec<Vec<usize>>,
}

impl ShardedObjective {
    pub fn new(parent: Objective, workers: usize) -> Result<Self> {
        let m = parent.samples();
        if workers == 0 || workers > m {
            return Err(Error::invalid(format!(
                "cannot shard {m} samples across {workers} workers"
            )));
        }
        let shards = (0..workers)
            .map(|n| (n * m / workers..(n + 1) * m / workers).collect())
            .collect();
        Ok(ShardedObjective { parent, shards })
    }

    pub fn parent(&self) -> &Objective {
        &self.parent
    }

    pub fn workers(&self) -> usize {
        self.shards.len()
    }

    pub fn shard(&self, n: usize) -> &[usize] {
        &self.shards[n]
    }

    pub fn shards_equal_sized(&self) -> bool {
        self.shards.windows(2).all(|w| w[0].len() == w[1].len())
    }

    /// `f_n(x)`: mean over shard `n`.
    pub fn shard_value(&self, n: usize, x: &[f64]) -> Result<f64> {
        self.parent.batch_value(x, self.shard(n))
    }

    pub fn shard_gradient(&self, n: usize, x: &[f64]) -> Result<ParamVector> {
        self.parent.batch_gradient(x, self.shard(n))
    }

    /// Largest within-shard per-sample variance at `x`.
    pub fn inner_variance(&self, x: &[f64]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for shard in &self.shards {
            worst = worst.max(self.parent.sample_variance(x, shard)?);
        }
        Ok(worst)
    }

    /// `(1/N) sum_n ||f_n'(x) - f'(x)||^2`.
    pub fn outer_variance(&self, x: &[f64]) -> Result<f64> {
        let full = self.parent.full_gradient(x)?;
        let mut total = 0.0;
        for n in 0..self.workers() {
            total += vecops::norm_sq(&vecops::sub(&self.shard_gradient(n, x)?, &full));
        }
        Ok(total / self.workers() as f64)
    }

    /// `sigma` for the sharded setting, measured at the parent's reference points.
    pub fn inner_sigma_bound(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for x in self.parent.reference_points() {
            worst = worst.max(self.inner_variance(x)?);
        }
        Ok(worst.sqrt())
    }

    /// `varsigma`, measured at the parent's reference points.
    pub fn varsigma_bound(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for x in self.parent.reference_points() {
            worst = worst.max(self.outer_variance(x)?);
        }
        Ok(worst.sqrt())
    }
}

/// Empirical smoothness and variance constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EstimatedConstants {
    pub l_hat: f64,
    pub sigma_hat: f64,
    pub varsigma_hat: f64,
}

/// Probes random points and pairs: `L_hat` is the largest observed gradient
/// difference ratio, `sigma_hat`/`varsigma_hat` the square roots of the
/// largest inner/outer variances.
pub fn estimate_constants(
    sharded: &ShardedObjective,
    probe_count: usize,
    seed: u64,
) -> Result<EstimatedConstants> {
    if probe_count < 2 {
        return Err(Error::invalid("probe_count must be at least 2"));
    }
    let obj = sharded.parent();
    let d = obj.dim();
    let mut r = rng::stream(seed, rng::Stream::Probe);
    let points: Vec<ParamVector> = (0..probe_count)
        .map(|_| (0..d).map(|_| r.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let grads = points
        .iter()
        .map(|x| obj.full_gradient(x))
        .collect::<Result<Vec<_>>>()?;
    let mut l_hat: f64 = 0.0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let dx = vecops::norm(&vecops::sub(&points[i], &points[j]));
            if dx > 0.0 {
                let dg = vecops::norm(&vecops::sub(&grads[i], &grads[j]));
                l_hat = l_hat.max(dg / dx);
            }
        }
    }
    let mut inner: f64 = 0.0;
    let mut outer: f64 = 0.0;
    for x in &points {
        inner = inner.max(sharded.inner_variance(x)?);
        outer = outer.max(sharded.outer_variance(x)?);
    }
    Ok(EstimatedConstants {
        l_hat,
        sigma_hat: inner.sqrt(),
        varsigma_hat: outer.sqrt(),
    })
}
