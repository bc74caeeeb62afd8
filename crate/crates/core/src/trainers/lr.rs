//! Theorem-derived learning rates and their side conditions.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrRule {
    Gd,
    /// Plain and minibatch SGD; pass the effective (averaged) sigma.
    Sgd,
    Csgd,
    EcSgd,
    Asgd,
    Dsgd,
}

/// Problem constants. Each rule reads only the ones it needs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct LrInputs {
    pub l: Option<f64>,
    pub sigma: Option<f64>,
    /// `sigma'`, the square root of the compression error bound.
    pub sigma_prime: Option<f64>,
    pub varsigma: Option<f64>,
    pub rho: Option<f64>,
    pub tau: Option<usize>,
    pub iterations: usize,
    pub workers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LrChoice {
    pub gamma: f64,
    pub violations: Vec<String>,
}

fn need(v: Option<f64>, name: &'static str) -> Result<f64> {
    match v {
        Some(x) if x.is_finite() && x >= 0.0 => Ok(x),
        Some(_) => Err(Error::invalid(format!("constant {name} must be finite and non-negative"))),
        None => Err(Error::MissingConstant(name)),
    }
}

fn positive_l(inputs: &LrInputs) -> Result<f64> {
    let l = need(inputs.l, "L")?;
    if l <= 0.0 {
        return Err(Error::invalid("L must be positive"));
    }
    Ok(l)
}

/// `sigma_c^2 = sigma^2/N + (1 + 1/N) sigma'^2`.
pub fn csgd_sigma(sigma: f64, sigma_prime: f64, workers: usize) -> f64 {
    let n = workers as f64;
    (sigma * sigma / n + (1.0 + 1.0 / n) * sigma_prime * sigma_prime).sqrt()
}

pub fn auto_learning_rate(rule: LrRule, inputs: &LrInputs) -> Result<LrChoice> {
    if inputs.iterations == 0 || inputs.workers == 0 {
        return Err(Error::invalid("T and N must be positive"));
    }
    let t = inputs.iterations as f64;
    let n = inputs.workers as f64;
    let gamma = match rule {
        LrRule::Gd => 1.0 / positive_l(inputs)?,
        LrRule::Sgd => {
            let l = positive_l(inputs)?;
            1.0 / (l + need(inputs.sigma, "sigma")? * (t * l).sqrt())
        }
        LrRule::Csgd => {
            let l = positive_l(inputs)?;
            let sc = csgd_sigma(
                need(inputs.sigma, "sigma")?,
                need(inputs.sigma_prime, "sigma_prime")?,
                inputs.workers,
            );
            1.0 / (l + sc * (t * l).sqrt())
        }
        LrRule::EcSgd => {
            let l = positive_l(inputs)?;
            let s = need(inputs.sigma, "sigma")?;
            let sp = need(inputs.sigma_prime, "sigma_prime")?;
            1.0 / (2.0 * l + (t / n).sqrt() * s + t.cbrt() * sp.powf(2.0 / 3.0))
        }
        LrRule::Asgd => {
            let l = positive_l(inputs)?;
            let tau = inputs.tau.ok_or(Error::MissingConstant("tau"))? as f64;
            1.0 / (l * (tau + 1.0) + (t * l).sqrt() * need(inputs.sigma, "sigma")?)
        }
        LrRule::Dsgd => {
            let s = need(inputs.sigma, "sigma")?;
            let vs = need(inputs.varsigma, "varsigma")?;
            let rho = need(inputs.rho, "rho")?;
            if rho >= 1.0 {
                return Err(Error::invalid("rho must be below 1"));
            }
            1.0 / (1.0 + (t * n).sqrt() * s + t.cbrt() * vs.powf(2.0 / 3.0) * rho.powf(2.0 / 3.0) * (1.0 - rho).powf(-2.0 / 3.0))
        }
    };
    Ok(LrChoice {
        gamma,
        violations: side_conditions(rule, gamma, inputs),
    })
}

/// Human-readable descriptions of every violated side condition. Missing
/// constants simply skip the conditions that need them.
pub fn side_conditions(rule: LrRule, gamma: f64, inputs: &LrInputs) -> Vec<String> {
    let mut out = Vec::new();
    let t = inputs.iterations as f64;
    let n = inputs.workers as f64;
    let l = inputs.l.filter(|l| *l > 0.0);
    match rule {
        LrRule::Gd => {
            if let Some(l) = l {
                if gamma >= 2.0 / l {
                    out.push(format!("gamma {gamma} >= 2/L = {}: descent not guaranteed", 2.0 / l));
                }
            }
        }
        LrRule::Sgd | LrRule::Csgd => {
            if let Some(l) = l {
                if gamma * l > 1.0 {
                    out.push(format!("gamma*L = {} exceeds 1", gamma * l));
                }
            }
        }
        LrRule::EcSgd => {
            let mut bound = f64::INFINITY;
            if let Some(l) = l {
                bound = bound.min(1.0 / (4.0 * l));
            }
            if let Some(s) = inputs.sigma.filter(|s| *s > 0.0) {
                bound = bound.min((n / t).sqrt() / s);
            }
            if let Some(sp) = inputs.sigma_prime.filter(|s| *s > 0.0) {
                bound = bound.min(1.0 / (t.cbrt() * sp.powf(2.0 / 3.0)));
            }
            if gamma > bound {
                out.push(format!("gamma {gamma} exceeds min{{1/(4L), sqrt(N/T)/sigma, 1/(T^(1/3) sigma'^(2/3))}} = {bound}"));
            }
        }
        LrRule::Asgd => {
            if let (Some(l), Some(tau)) = (l, inputs.tau) {
                if gamma * l * tau as f64 > 0.5 {
                    out.push(format!("gamma*L*tau = {} exceeds 1/2", gamma * l * tau as f64));
                }
            }
        }
        LrRule::Dsgd => {
            if let (Some(l), Some(rho)) = (l, inputs.rho) {
                let bound = ((1.0 - rho) / (4.0 * l)).min((1.0 - rho).powi(2) * n / l);
                if gamma > bound {
                    out.push(format!("gamma {gamma} exceeds min{{(1-rho)/(4L), (1-rho)^2 N/L}} = {bound}"));
                }
            }
        }
    }
    out
}
