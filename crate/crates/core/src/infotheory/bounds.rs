//! How far noisy-label mutual information can drift from clean-label mutual
//! information under binary class-dependent noise (all logs base 2).
//!
//! For a feature value `z` let `β = P(Y=1 | Z=z)`. The noisy-label MI splits
//! into a `(1 − e1 − e2)`-scaled copy of the clean MI plus a per-`z` bias
//! term [`kl_noise_bias`]. Two features can only swap order if their biases
//! differ, so the spread of the bias bounds the order gap.

use crate::data::NoiseRatePair;
use crate::error::{Error, Result};

/// `β = α / (1 + α)` for posterior odds `α ∈ [1/5, 5]`.
pub const DEFAULT_BETA_RANGE: (f64, f64) = (1.0 / 6.0, 5.0 / 6.0);

/// `x log2 x`, continuous at 0.
fn xlog2x(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.log2()
    }
}

/// Binary entropy in bits.
pub fn binary_entropy(e: f64) -> f64 {
    -xlog2x(e) - xlog2x(1.0 - e)
}

/// Worst-case order gap `ε` for KL mutual information:
///
/// `ε = e [δ log2 δ − (1 + δ) log2(1 + δ)] + H(e)`,
///
/// where `e` is the larger rate and `δ ∈ [0, 1]` the ratio smaller/larger.
/// Noisy MI gaps above `ε` keep the clean order.
pub fn kl_order_gap(rates: NoiseRatePair) -> Result<f64> {
    rates.require_informative()?;
    let (e, delta) = rates.larger_and_ratio();
    if e == 0.0 {
        return Ok(0.0);
    }
    let eps = e * (xlog2x(delta) - xlog2x(1.0 + delta)) + binary_entropy(e);
    Ok(eps.max(0.0))
}

/// Bias added to the noisy-label MI integrand at a point with clean
/// posterior `β`:
///
/// `q log2 q + (1 − q) log2(1 − q) − (1 − e1 − e2)[β log2 β + (1 − β) log2(1 − β)]`
///
/// with `q = (1 − e1 − e2) β + e2`. Unimodal in `β` with its maximum at
/// `β* = e2 / (e1 + e2)`.
pub fn kl_noise_bias(beta: f64, rates: NoiseRatePair) -> Result<f64> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::InvalidArgument(format!(
            "beta must lie in [0, 1), got {beta}"
        )));
    }
    rates.require_informative()?;
    Ok(bias(beta, rates))
}

fn bias(beta: f64, rates: NoiseRatePair) -> f64 {
    let a = 1.0 - rates.e1 - rates.e2;
    let q = a * beta + rates.e2;
    xlog2x(q) + xlog2x(1.0 - q) - a * (xlog2x(beta) + xlog2x(1.0 - beta))
}

/// Spread (max − min) of [`kl_noise_bias`] over `β ∈ [beta_lo, beta_hi]`.
///
/// Evaluated exactly from unimodality: the maximum sits at `β*` clamped to
/// the interval and the minimum at one of the endpoints.
pub fn practical_gap(rates: NoiseRatePair, beta_lo: f64, beta_hi: f64) -> Result<f64> {
    if !(0.0 <= beta_lo && beta_lo <= beta_hi && beta_hi < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "need 0 <= beta_lo <= beta_hi < 1, got [{beta_lo}, {beta_hi}]"
        )));
    }
    rates.require_informative()?;
    let total = rates.e1 + rates.e2;
    if total == 0.0 {
        return Ok(0.0);
    }
    let peak = (rates.e2 / total).clamp(beta_lo, beta_hi);
    let hi = bias(peak, rates);
    let lo = bias(beta_lo, rates).min(bias(beta_hi, rates));
    Ok((hi - lo).max(0.0))
}

/// [`practical_gap`] over [`DEFAULT_BETA_RANGE`].
pub fn practical_gap_default(rates: NoiseRatePair) -> Result<f64> {
    practical_gap(rates, DEFAULT_BETA_RANGE.0, DEFAULT_BETA_RANGE.1)
}
