//! Symmetric doubly stochastic mixing matrices and their spectral parameter
//! `rho = max_{n >= 2} |lambda_n(W)|`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecops::{self, ParamVector};

const TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TopologyKind {
    FullyConnected,
    Ring,
    DisconnectedBlock,
    Custom { path: String },
}

/// A validated `N x N` mixing matrix stored row-major with its cached `rho`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfusionMatrix {
    n: usize,
    entries: Vec<f64>,
    rho: f64,
}

impl ConfusionMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidMatrix("empty matrix".into()));
        }
        if let Some(r) = rows.iter().position(|r| r.len() != n) {
            return Err(Error::InvalidMatrix(format!("row {r} has {} entries, expected {n}", rows[r].len())));
        }
        let entries: Vec<f64> = rows.into_iter().flatten().collect();
        validate(n, &entries)?;
        let rho = spectral_rho_dense(n, &entries);
        Ok(ConfusionMatrix { n, entries, rho })
    }

    /// Parses `N` whitespace-separated rows of `N` decimals.
    pub fn parse_text(text: &str) -> Result<Self> {
        let rows = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .enumerate()
            .map(|(i, line)| {
                line.split_whitespace()
                    .map(|tok| {
                        tok.parse::<f64>()
                            .map_err(|_| Error::InvalidMatrix(format!("row {i}: bad number {tok:?}")))
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(rows)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse_text(&std::fs::read_to_string(path)?)
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn spectral_gap(&self) -> f64 {
        1.0 - self.rho
    }

    /// Right-multiplies the worker-model matrix `X = [x_0 .. x_{N-1}]` by `W`:
    /// `x_n' = sum_j W[j][n] x_j`, accumulated in `j` order, skipping zeros.
    pub fn mix(&self, models: &[ParamVector]) -> Result<Vec<ParamVector>> {
        if models.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: models.len(),
            });
        }
        let dim = models[0].len();
        Ok((0..self.n)
            .map(|n| {
                let mut acc = vec![0.0; dim];
                for (j, x) in models.iter().enumerate() {
                    let w = self.get(j, n);
                    if w != 0.0 {
                        for (a, v) in acc.iter_mut().zip(x) {
                            *a += w * v;
                        }
                    }
                }
                acc
            })
            .collect())
    }
}

fn validate(n: usize, e: &[f64]) -> Result<()> {
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            let v = e[i * n + j];
            if !v.is_finite() || v < -TOL {
                return Err(Error::InvalidMatrix(format!("entry ({i},{j}) = {v} is negative or non-finite")));
            }
            if (v - e[j * n + i]).abs() > TOL {
                return Err(Error::InvalidMatrix(format!("not symmetric at ({i},{j})")));
            }
            row += v;
        }
        if (row - 1.0).abs() > TOL {
            return Err(Error::InvalidMatrix(format!("row {i} sums to {row}, not 1")));
        }
    }
    Ok(())
}

pub fn make_matrix(kind: &TopologyKind, n: usize) -> Result<ConfusionMatrix> {
    if n == 0 {
        return Err(Error::invalid("topology needs at least one worker"));
    }
    let rows = match kind {
        TopologyKind::FullyConnected => vec![vec![1.0 / n as f64; n]; n],
        TopologyKind::Ring => {
            if n < 3 {
                return Err(Error::invalid(format!("ring topology needs N >= 3, got {n}")));
            }
            let third = 1.0 / 3.0;
            (0..n)
                .map(|i| {
                    let mut r = vec![0.0; n];
                    r[i] = third;
                    r[(i + 1) % n] = third;
                    r[(i + n - 1) % n] = third;
                    r
                })
                .collect()
        }
        TopologyKind::DisconnectedBlock => {
            if n < 2 {
                return Err(Error::invalid("disconnected block needs N >= 2"));
            }
            let w = 1.0 / (n - 1) as f64;
            (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| match (i == n - 1, j == n - 1) {
                            (true, true) => 1.0,
                            (false, false) => w,
                            _ => 0.0,
                        })
                        .collect()
                })
                .collect()
        }
        TopologyKind::Custom { path } => {
            let m = ConfusionMatrix::load(Path::new(path))?;
            if m.size() != n {
                return Err(Error::InvalidMatrix(format!(
                    "{path} is {}x{}, expected {n}x{n}",
                    m.size(),
                    m.size()
                )));
            }
            return Ok(m);
        }
    };
    ConfusionMatrix::from_rows(rows)
}

/// `rho` by power iteration on `W^2` restricted to the complement of the
/// all-ones vector. Returns 0 when that complement is trivial.
pub fn spectral_rho(m: &ConfusionMatrix) -> f64 {
    m.rho
}

fn spectral_rho_dense(n: usize, e: &[f64]) -> f64 {
    if n == 1 {
        return 0.0;
    }
    let apply = |v: &[f64]| -> ParamVector {
        (0..n)
            .map(|i| vecops::dot(&e[i * n..(i + 1) * n], v))
            .collect()
    };
    let deflate = |v: &mut ParamVector| {
        let mean = v.iter().sum::<f64>() / n as f64;
        v.iter_mut().for_each(|x| *x -= mean);
    };
    // fixed irregular start vector so no eigen-direction is missed by symmetry
    let mut v: ParamVector = (0..n)
        .map(|i| ((i as f64 + 1.0) * 0.618_033_988_749_895).fract() + 0.1 * (i as f64).sin())
        .collect();
    deflate(&mut v);
    let mut est = 0.0;
    for _ in 0..200_000 {
        let norm = vecops::norm(&v);
        if norm < 1e-300 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        let mut w = apply(&apply(&v));
        deflate(&mut w);
        // Rayleigh quotient of W^2 on a unit vector
        let next = vecops::dot(&v, &w).max(0.0);
        v = w;
        if (next - est).abs() <= 1e-16 * next.max(1.0) {
            est = next;
            break;
        }
        est = next;
    }
    est.sqrt().min(1.0)
}
