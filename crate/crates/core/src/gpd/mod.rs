//! Generalized Pareto distribution with positive shape.
//!
//! The survival function is `(1 + γ z / σ)^(-1/γ)` for `z ≥ 0`, with scale
//! `σ > 0` and tail index `γ > 0`. The `γ ≤ 0` branches of the family are not
//! supported.

mod fit;

pub(crate) use fit::SliceFitter;
pub use fit::{gp_fit, FitConfig, FitStatus, GpFit, SigmaBox};

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GptError, Result};

/// Scale and shape of a GP distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpParams {
    pub sigma: f64,
    pub gamma: f64,
}

impl GpParams {
    pub fn new(sigma: f64, gamma: f64) -> Result<Self> {
        let p = GpParams { sigma, gamma };
        p.check()?;
        Ok(p)
    }

    fn check(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(GptError::Domain(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(GptError::Domain(format!("gamma must be positive, got {}", self.gamma)));
        }
        Ok(())
    }
}

/// Threshold excesses `z_i = y_i - u` for the observations with `y_i > u`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcessSample {
    pub values: Vec<f64>,
    pub threshold_u: f64,
}

impl ExcessSample {
    pub fn new(values: Vec<f64>, threshold_u: f64) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(GptError::Domain(format!("excess values must be finite and nonnegative, got {bad}")));
        }
        Ok(ExcessSample { values, threshold_u })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Mean of a GP law; infinite whenever `γ ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TheoreticalMean {
    Finite(f64),
    Infinite,
}

impl TheoreticalMean {
    pub fn as_f64(self) -> f64 {
        match self {
            TheoreticalMean::Finite(m) => m,
            TheoreticalMean::Infinite => f64::INFINITY,
        }
    }
}

impl std::fmt::Display for TheoreticalMean {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TheoreticalMean::Finite(m) => write!(f, "{}", crate::numfmt::sig17(*m)),
            TheoreticalMean::Infinite => f.write_str("inf"),
        }
    }
}

fn check_z(z: f64) -> Result<()> {
    if z >= 0.0 && z.is_finite() {
        Ok(())
    } else {
        Err(GptError::Domain(format!("excess must be finite and nonnegative, got {z}")))
    }
}

/// Log-density `-log σ - (1/γ + 1) log(1 + γ z / σ)`.
pub fn gp_loglik(z: f64, p: GpParams) -> Result<f64> {
    check_z(z)?;
    p.check()?;
    Ok(loglik_unchecked(z, p.sigma, p.gamma))
}

#[inline]
pub(crate) fn loglik_unchecked(z: f64, sigma: f64, gamma: f64) -> f64 {
    -sigma.ln() - (1.0 / gamma + 1.0) * (gamma * z / sigma).ln_1p()
}

/// Sum of [`gp_loglik`] over a slice without validation.
pub(crate) fn total_loglik(values: &[f64], p: GpParams) -> f64 {
    values.iter().map(|&z| loglik_unchecked(z, p.sigma, p.gamma)).sum()
}

/// Partial derivatives `(∂φ/∂σ, ∂φ/∂γ)` of the log-density.
pub fn gp_gradient(z: f64, p: GpParams) -> Result<(f64, f64)> {
    check_z(z)?;
    p.check()?;
    let GpParams { sigma, gamma } = p;
    let t = 1.0 + gamma * z / sigma;
    let g = -1.0 / sigma + (1.0 + 1.0 / gamma) * gamma * z / (sigma * sigma * t);
    let h = (gamma * z / sigma).ln_1p() / (gamma * gamma) - (1.0 + 1.0 / gamma) * z / (sigma + gamma * z);
    Ok((g, h))
}

/// `P(Z > z)`.
pub fn gp_survival(z: f64, p: GpParams) -> Result<f64> {
    check_z(z)?;
    p.check()?;
    Ok((-(p.gamma * z / p.sigma).ln_1p() / p.gamma).exp())
}

/// Inverse of the distribution function: the `z` with `P(Z > z) = 1 - q`.
pub fn gp_quantile(q: f64, p: GpParams) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(GptError::Domain(format!("quantile level must lie in (0, 1), got {q}")));
    }
    p.check()?;
    Ok(quantile_unchecked(q, p))
}

#[inline]
fn quantile_unchecked(q: f64, p: GpParams) -> f64 {
    p.sigma * (-p.gamma * (-q).ln_1p()).exp_m1() / p.gamma
}

/// Draws `n` excesses by inverse transform from a seeded ChaCha stream.
pub fn gp_sample(n: usize, p: GpParams, seed: u64) -> Result<ExcessSample> {
    if n == 0 {
        return Err(GptError::Domain("sample size must be at least 1".into()));
    }
    p.check()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let values = (0..n)
        .map(|_| {
            let u: f64 = rng.sample(Open01);
            quantile_unchecked(u, p)
        })
        .collect();
    Ok(ExcessSample { values, threshold_u: 0.0 })
}

/// Median `σ (2^γ - 1) / γ`.
pub fn gp_theoretical_median(p: GpParams) -> f64 {
    p.sigma * (p.gamma * std::f64::consts::LN_2).exp_m1() / p.gamma
}

/// Mean `σ / (1 - γ)` for `γ < 1`.
pub fn gp_theoretical_mean(p: GpParams) -> TheoreticalMean {
    if p.gamma >= 1.0 {
        TheoreticalMean::Infinite
    } else {
        TheoreticalMean::Finite(p.sigma / (1.0 - p.gamma))
    }
}
