//! Minibatch sampling with and without replacement.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::rng::Rng;
use crate::vecops::ParamVector;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    #[default]
    WithReplacement,
    WithoutReplacement,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinibatchSpec {
    pub batch: usize,
    pub mode: SamplingMode,
}

impl MinibatchSpec {
    pub fn new(batch: usize, mode: SamplingMode) -> Self {
        MinibatchSpec { batch, mode }
    }

    pub fn validate(&self, population: usize) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if population == 0 {
            return Err(Error::invalid("cannot sample from an empty population"));
        }
        if self.mode == SamplingMode::WithoutReplacement && self.batch > population {
            return Err(Error::invalid(format!(
                "batch {} exceeds population {} without replacement",
                self.batch, population
            )));
        }
        Ok(())
    }
}

/// Draws `spec.batch` positions in `0..population`.
///
/// Without replacement this is a partial Fisher-Yates shuffle, so every
/// `B`-subset is equally likely.
pub fn draw(spec: &MinibatchSpec, population: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    spec.validate(population)?;
    Ok(match spec.mode {
        SamplingMode::WithReplacement => {
            (0..spec.batch).map(|_| rng.random_range(0..population)).collect()
        }
        SamplingMode::WithoutReplacement => {
            let mut perm: Vec<usize> = (0..population).collect();
            for i in 0..spec.batch {
                let j = rng.random_range(i..population);
                perm.swap(i, j);
            }
            perm.truncate(spec.batch);
            perm
        }
    })
}

/// Draws from an explicit index pool (e.g. a worker's shard).
pub fn draw_from(spec: &MinibatchSpec, pool: &[usize], rng: &mut Rng) -> Result<Vec<usize>> {
    Ok(draw(spec, pool.len(), rng)?
        .into_iter()
        .map(|i| pool[i])
        .collect())
}

/// `(1/B) sum_{m in batch} F'_m(x)` over a fresh draw from the whole sample set.
pub fn minibatch_gradient(
    obj: &Objective,
    x: &[f64],
    spec: &MinibatchSpec,
    rng: &mut Rng,
) -> Result<ParamVector> {
    let batch = draw(spec, obj.samples(), rng)?;
    obj.batch_gradient(x, &batch)
}

/// Ratio of the batch-mean variance to the single-sample variance:
/// `(M-B)/((M-1)B)` without replacement, `1/B` with replacement.
pub fn variance_factor(population: usize, batch: usize, mode: SamplingMode) -> Result<f64> {
    MinibatchSpec::new(batch, mode).validate(population)?;
    Ok(match mode {
        SamplingMode::WithReplacement => 1.0 / batch as f64,
        SamplingMode::WithoutReplacement => {
            if population == 1 {
                0.0
            } else {
                (population - batch) as f64 / ((population - 1) as f64 * batch as f64)
            }
        }
    })
}
