use statrs::distribution::{Continuous, Gamma, LogNormal};
use statrs::function::gamma::digamma;

use crate::error::{Error, Result};

/// `ψ′(x)` for `x > 0`: recurrence up to `x ≥ 12`, then the asymptotic
/// series.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 12.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let r = 1.0 / x;
    let r2 = r * r;
    acc + r + 0.5 * r2 + r * r2 * (1.0 / 6.0 - r2 * (1.0 / 30.0 - r2 * (1.0 / 42.0 - r2 * (1.0 / 30.0))))
}

/// Log-scale mean and variance of `Gamma(shape, rate)`:
/// `(ψ(shape) − log rate, ψ′(shape))`.
pub fn lognormal_match(shape: f64, rate: f64) -> (f64, f64) {
    (digamma(shape) - rate.ln(), trigamma(shape))
}

/// `Gamma(v; shape, rate) / LogNormal(v; μ, σ²)` with the log-normal
/// matched to the gamma's log-scale mean and variance.
pub fn frailty_correction_weight(v: f64, shape: f64, rate: f64) -> Result<f64> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::DomainError(format!("frailty value must be positive, got {v}")));
    }
    let gamma = Gamma::new(shape, rate)
        .map_err(|e| Error::DomainError(format!("gamma(shape = {shape}, rate = {rate}): {e}")))?;
    let (mu, var) = lognormal_match(shape, rate);
    let lognormal =
        LogNormal::new(mu, var.sqrt()).map_err(|e| Error::DomainError(format!("log-normal: {e}")))?;
    Ok((gamma.ln_pdf(v) - lognormal.ln_pdf(v)).exp())
}
