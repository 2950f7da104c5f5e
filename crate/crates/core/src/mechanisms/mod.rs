//! Noise samplers, the Laplace and Gaussian mechanisms, explicit-constant tail
//! bounds and budget accounting.
//!
//! Samplers use floating-point inverse-CDF (Laplace) and ziggurat (normal)
//! methods. Floating-point side channels of these samplers are not addressed.

mod budget;
mod noise;

pub use budget::{budget_split, BudgetLedger, LedgerEntry, PrivacyBudget};
pub use noise::{NoiseSource, NoiseStream};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, Error, Result};

/// Pure (`δ = 0`, Laplace) or approximate (`δ > 0`, Gaussian) privacy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Pure,
    Approx,
}

impl Mode {
    pub fn of(budget: &PrivacyBudget) -> Self {
        if budget.is_pure() {
            Mode::Pure
        } else {
            Mode::Approx
        }
    }
}

/// Margin added to the Gaussian constant so that `c² > 2 ln(1.25/δ)` holds
/// strictly.
pub const GAUSSIAN_MARGIN: f64 = 1e-6;

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(invalid_param(format!("{name} must be positive and finite, got {x}")))
    }
}

fn probability(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(invalid_param(format!("{name} must be in (0, 1), got {x}")))
    }
}

/// One draw from `Lap(b)`, density `exp(-|x|/b) / 2b`.
pub fn laplace_sample(b: f64, stream: &mut NoiseStream) -> Result<f64> {
    positive("laplace scale", b)?;
    if stream.is_zero() {
        return Ok(0.0);
    }
    let u = stream.uniform();
    Ok(if u < 0.5 {
        b * (2.0 * u).ln()
    } else {
        -b * (2.0 * (1.0 - u)).ln()
    })
}

/// One draw from `N(0, sigma²)`.
pub fn gaussian_sample(sigma: f64, stream: &mut NoiseStream) -> Result<f64> {
    positive("gaussian sigma", sigma)?;
    if stream.is_zero() {
        return Ok(0.0);
    }
    let z: f64 = stream.rng().sample(StandardNormal);
    Ok(sigma * z)
}

/// Laplace scale `Δ₁/ε`.
pub fn laplace_scale(l1_sensitivity: f64, epsilon: f64) -> Result<f64> {
    positive("L1 sensitivity", l1_sensitivity)?;
    positive("epsilon", epsilon)?;
    Ok(l1_sensitivity / epsilon)
}

/// `c = sqrt(2 ln(1.25/δ)) + margin`.
pub fn gaussian_constant(delta: f64) -> Result<f64> {
    probability("delta", delta)?;
    Ok((2.0 * (1.25 / delta).ln()).sqrt() + GAUSSIAN_MARGIN)
}

/// Standard deviation `c·Δ₂/ε` of the Gaussian mechanism. Only defined for
/// `ε < 1`.
pub fn gaussian_sigma(l2_sensitivity: f64, epsilon: f64, delta: f64) -> Result<f64> {
    positive("L2 sensitivity", l2_sensitivity)?;
    positive("epsilon", epsilon)?;
    if epsilon >= 1.0 {
        return Err(Error::GaussianEpsilonTooLarge(epsilon));
    }
    Ok(gaussian_constant(delta)? * l2_sensitivity / epsilon)
}

/// Adds i.i.d. `Lap(Δ₁/ε)` noise to every coordinate.
pub fn laplace_mechanism(
    values: &[f64],
    l1_sensitivity: f64,
    epsilon: f64,
    stream: &mut NoiseStream,
) -> Result<Vec<f64>> {
    let b = laplace_scale(l1_sensitivity, epsilon)?;
    values
        .iter()
        .map(|&v| Ok(v + laplace_sample(b, stream)?))
        .collect()
}

/// Adds i.i.d. `N(0, σ²)` noise with `σ = c·Δ₂/ε` to every coordinate.
pub fn gaussian_mechanism(
    values: &[f64],
    l2_sensitivity: f64,
    epsilon: f64,
    delta: f64,
    stream: &mut NoiseStream,
) -> Result<Vec<f64>> {
    let sigma = gaussian_sigma(l2_sensitivity, epsilon, delta)?;
    values
        .iter()
        .map(|&v| Ok(v + gaussian_sample(sigma, stream)?))
        .collect()
}

/// Max-coordinate error of the Laplace mechanism over `k` outputs, holding
/// with probability `1 - β`: `(Δ₁/ε)·ln(k/β)`.
pub fn laplace_max_error(l1_sensitivity: f64, epsilon: f64, k: usize, beta: f64) -> Result<f64> {
    probability("beta", beta)?;
    let b = laplace_scale(l1_sensitivity, epsilon)?;
    Ok(b * (k.max(1) as f64 / beta).ln())
}

/// Max-coordinate error of the Gaussian mechanism over `k` outputs, holding
/// with probability `1 - β`: `2ε⁻¹Δ₂·sqrt(ln(2/δ)·ln(2k/β))`.
pub fn gaussian_max_error(
    l2_sensitivity: f64,
    epsilon: f64,
    delta: f64,
    k: usize,
    beta: f64,
) -> Result<f64> {
    positive("L2 sensitivity", l2_sensitivity)?;
    positive("epsilon", epsilon)?;
    probability("delta", delta)?;
    probability("beta", beta)?;
    let k = k.max(1) as f64;
    Ok(2.0 * l2_sensitivity / epsilon * ((2.0 / delta).ln() * (2.0 * k / beta).ln()).sqrt())
}

/// Bound `t` with `Pr[max over k draws of |N(0, σ²)| ≥ t] ≤ β`, from
/// `Pr[|Y| ≥ t] ≤ 2 exp(-t²/2σ²)` and a union bound.
pub fn gaussian_tail(sigma: f64, k: usize, beta: f64) -> Result<f64> {
    positive("sigma", sigma)?;
    probability("beta", beta)?;
    Ok(sigma * (2.0 * (2.0 * k.max(1) as f64 / beta).ln()).sqrt())
}

/// Tail bound for the sum of `k` i.i.d. `Lap(b)` variables:
/// `Pr[|ΣY| > 2b·sqrt(2 ln(2/β))·max(√k, sqrt(ln(2/β)))] ≤ β`.
pub fn sum_laplace_tail(k: usize, b: f64, beta: f64) -> Result<f64> {
    if k < 1 {
        return Err(invalid_param("k must be at least 1"));
    }
    positive("laplace scale", b)?;
    probability("beta", beta)?;
    let l = (2.0 / beta).ln();
    Ok(2.0 * b * (2.0 * l).sqrt() * (k as f64).sqrt().max(l.sqrt()))
}

/// `⌈log₂ x⌉` for `x >= 1` (`0` for `x <= 1`).
pub fn ceil_log2(x: usize) -> u32 {
    if x <= 1 {
        0
    } else {
        usize::BITS - (x - 1).leading_zeros()
    }
}

/// `⌊log₂ x⌋` for `x >= 1`.
pub fn floor_log2(x: usize) -> u32 {
    assert!(x >= 1, "floor_log2 of zero");
    usize::BITS - 1 - x.leading_zeros()
}
