//! Series representation of Brownian motion on `[0, 1]` confined by
//! `exp(-β ∫∫ (B_t - B_s)² dt ds)`, one spatial coordinate.
//!
//! The confining form is `β ∫∫ θ(t,s) dB_t dB_s` with `θ(t,s) = 2 min(s,t)(1 - max(s,t))`,
//! whose integral operator has eigenpairs `λ_k = 2β/(π²k²)`, `v_k(t) = √2 sin(πkt)`.
//! A Gaussian density `exp(-Q)` enters the resolvent with weight `2λ_k/(1 + 2λ_k)`,
//! which is what the matrix engine reproduces.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::stats::neumaier_sum;

/// Hard cap on the number of series terms.
pub const MAX_TERMS: usize = 200_000_000;

/// Coupling and truncation tolerance for the series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub beta: f64,
    pub tol: f64,
}

impl KernelSpec {
    pub fn new(beta: f64, tol: f64) -> Result<Self> {
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::InvalidArgument(format!("beta must be finite and nonnegative, got {beta}")));
        }
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
        }
        Ok(Self { beta, tol })
    }

    /// Terms needed so the neglected tail is below `tol`.
    ///
    /// Each term is at most `min(32β/(π⁴k⁴), 8/(π²k²))`; the integral tails of
    /// these bounds give the two candidate cutoffs.
    pub fn truncation(&self) -> usize {
        let quartic = (32.0 * self.beta / (3.0 * PI.powi(4) * self.tol)).cbrt();
        let quadratic = 8.0 / (PI * PI * self.tol);
        (quartic.min(quadratic).ceil() as usize).clamp(1, MAX_TERMS)
    }
}

/// Eigenvalue `λ_k = 2β/(π²k²)` and eigenfunction `t ↦ √2 sin(πkt)`.
pub fn eigenpair(k: usize, beta: f64) -> Result<(f64, impl Fn(f64) -> f64)> {
    if k < 1 {
        return Err(Error::InvalidArgument("eigen index starts at 1".into()));
    }
    let kf = k as f64;
    let lambda = 2.0 * beta / (PI * PI * kf * kf);
    Ok((lambda, move |t: f64| 2f64.sqrt() * (PI * kf * t).sin()))
}

/// Resolvent weight of mode `k`: `2λ_k/(1 + 2λ_k) = 4β/(4β + π²k²)`.
pub fn resolvent_weight(k: usize, beta: f64) -> f64 {
    let k2 = (k * k) as f64;
    4.0 * beta / (4.0 * beta + PI * PI * k2)
}

/// `∫_0^t v_k(u) du / √2 · πk = 1 - cos(πkt)`.
fn profile(k: usize, t: f64) -> f64 {
    1.0 - (PI * k as f64 * t).cos()
}

fn check_time(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("time must lie in [0, 1], got {t}")));
    }
    Ok(())
}

/// Covariance `E[B_t B_s]` under the confined measure.
pub fn covariance_shepp(beta: f64, t: f64, s: f64, tol: f64) -> Result<f64> {
    let spec = KernelSpec::new(beta, tol)?;
    check_time(t)?;
    check_time(s)?;
    if beta == 0.0 {
        return Ok(t.min(s));
    }
    let k_max = spec.truncation();
    let correction = neumaier_sum((1..=k_max).rev().map(|k| {
        let k2 = (k * k) as f64;
        resolvent_weight(k, beta) * 2.0 * (profile(k, t) * profile(k, s)) / (PI * PI * k2)
    }));
    Ok(t.min(s) - correction)
}

/// Per-coordinate variance `Var(B_t)` under the confined measure.
pub fn variance_series(beta: f64, t: f64, tol: f64) -> Result<f64> {
    covariance_shepp(beta, t, t, tol)
}

/// Partial sum `Σ_{k≤K} (1 - cos πkt)²/(π²k²)`, which tends to `t/2`.
pub fn fourier_identity_check(t: f64, terms: usize) -> f64 {
    neumaier_sum((1..=terms).rev().map(|k| {
        let k2 = (k * k) as f64;
        profile(k, t).powi(2) / (PI * PI * k2)
    }))
}

/// `Σ_{k≥1} 1/(β + π²k²/2)` in closed form.
pub fn confinement_sum(beta: f64) -> f64 {
    let c = PI * PI / 2.0;
    if beta == 0.0 {
        return PI * PI / 6.0 / c;
    }
    let a = (beta / c).sqrt();
    let x = PI * a;
    // (x coth x - 1) / (2a²c), with a series near zero to avoid cancellation.
    let num = if x < 1e-3 { x * x / 3.0 - x.powi(4) / 45.0 } else { x / x.tanh() - 1.0 };
    num / (2.0 * a * a * c)
}

/// `max_t Var(B_t) · √β` over an even grid of `points` times in `(0, 1]`.
pub fn scaled_sup_variance(beta: f64, points: usize, tol: f64) -> Result<f64> {
    let mut best = 0.0_f64;
    for i in 1..=points {
        let t = i as f64 / points as f64;
        best = best.max(variance_series(beta, t, tol)?);
    }
    Ok(best * beta.sqrt())
}
