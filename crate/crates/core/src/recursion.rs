//! The confinement recursion between oscillation radii `R_k` and confinement
//! strengths `β_k`, together with its fixed-point scaling and the resulting
//! effective-mass lower bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which logarithm drives the radius update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LogFactor {
    /// `R_{k+1} = C₃C₄ (log α)^{1/2} α^{-1/4} R_k^{(2+p)/4}`.
    Alpha,
    /// `R_{k+1} = C₃C₄ (log β_k)^{1/2} β_k^{-1/4}`; needs `β_k > 1`.
    Beta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecursionConstants {
    /// Decomposition constant, at least 100.
    pub c_decomp: f64,
    /// Uniform oscillation constant.
    pub c_unif: f64,
    /// Power-law constant in `β_k = α/(c_p R_k^{2+p})`.
    pub c_p: f64,
    /// Step budget: `L ≤ ceil(c_stop · log α)`.
    pub c_stop: f64,
    pub log_factor: LogFactor,
}

impl Default for RecursionConstants {
    fn default() -> Self {
        Self {
            c_decomp: 100.0,
            c_unif: 0.01,
            c_p: 16.0 * std::f64::consts::E.powi(2),
            c_stop: 4.0,
            log_factor: LogFactor::Alpha,
        }
    }
}

impl RecursionConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_decomp >= 100.0) {
            return Err(Error::InvalidArgument(format!("c_decomp must be at least 100, got {}", self.c_decomp)));
        }
        for (name, v) in [("c_unif", self.c_unif), ("c_p", self.c_p), ("c_stop", self.c_stop)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecursionStep {
    pub k: usize,
    pub r: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecursionTrace {
    pub alpha: f64,
    pub p: f64,
    pub constants: RecursionConstants,
    /// Steps `1..=L`.
    pub steps: Vec<RecursionStep>,
    /// `R_{L+1}`, the first radius that failed to halve.
    pub next_r: f64,
    pub stop_index: usize,
    pub beta_l: f64,
    pub r_l: f64,
    /// `β_L`, reported as the effective-mass lower bound up to an absolute constant.
    pub mass_lower_bound: f64,
    /// `ceil(c_stop · log α)`.
    pub step_budget: usize,
}

impl RecursionTrace {
    pub fn within_step_budget(&self) -> bool {
        self.stop_index <= self.step_budget
    }
}

const MAX_STEPS: usize = 100_000;

/// Run the recursion from `R₁ = c_decomp² √(log α)` until the radius stops halving.
pub fn recursion_run(alpha: f64, p: f64, constants: &RecursionConstants) -> Result<RecursionTrace> {
    if !(alpha >= 2.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("alpha must be at least 2, got {alpha}")));
    }
    if !(p > 0.0 && p < 2.0) {
        return Err(Error::InvalidArgument(format!("p must lie in (0, 2), got {p}")));
    }
    constants.validate()?;
    let log_alpha = alpha.ln();
    let c = constants.c_decomp * constants.c_unif;
    let beta_of = |r: f64| alpha / (constants.c_p * r.powf(2.0 + p));
    let next = |k: usize, r: f64, beta: f64| -> Result<f64> {
        match constants.log_factor {
            LogFactor::Alpha => Ok(c * log_alpha.sqrt() * alpha.powf(-0.25) * r.powf((2.0 + p) / 4.0)),
            LogFactor::Beta => {
                let lb = beta.ln();
                if !(lb > 0.0) {
                    return Err(Error::NonPositiveLog { step: k, value: beta });
                }
                Ok(c * lb.sqrt() * beta.powf(-0.25))
            }
        }
    };

    let mut r = constants.c_decomp.powi(2) * log_alpha.sqrt();
    let mut steps = Vec::new();
    for k in 1..=MAX_STEPS {
        let beta = beta_of(r);
        steps.push(RecursionStep { k, r, beta });
        let r_next = next(k, r, beta)?;
        if r_next / r > 0.5 {
            let step_budget = (constants.c_stop * log_alpha).ceil() as usize;
            return Ok(RecursionTrace {
                alpha,
                p,
                constants: *constants,
                next_r: r_next,
                stop_index: k,
                beta_l: beta,
                r_l: r,
                mass_lower_bound: beta,
                step_budget,
                steps,
            });
        }
        r = r_next;
    }
    Err(Error::NonConvergence { iterations: MAX_STEPS, movement: r })
}

/// Normalized fixed-point ratios; each should stay in a fixed band over α.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    /// `β_L (log α)^{(4+2p)/(2-p)} / α^{4/(2-p)}`.
    pub beta_ratio: f64,
    /// `R_L α^{1/(2-p)} / (log α)^{2/(2-p)}`.
    pub r_ratio: f64,
}

pub fn fixed_point_check(trace: &RecursionTrace) -> Result<FixedPointReport> {
    if trace.steps.len() != trace.stop_index || trace.steps.is_empty() {
        return Err(Error::InvalidArgument("incomplete recursion trace".into()));
    }
    let p = trace.p;
    let la = trace.alpha.ln();
    Ok(FixedPointReport {
        beta_ratio: trace.beta_l * la.powf((4.0 + 2.0 * p) / (2.0 - p)) / trace.alpha.powf(4.0 / (2.0 - p)),
        r_ratio: trace.r_l * trace.alpha.powf(1.0 / (2.0 - p)) / la.powf(2.0 / (2.0 - p)),
    })
}

/// Scale `α^{4/(2-p)} / (log α)^{(4+2p)/(2-p)}` of the fixed point.
pub fn fixed_point_scale(alpha: f64, p: f64) -> f64 {
    alpha.powf(4.0 / (2.0 - p)) / alpha.ln().powf((4.0 + 2.0 * p) / (2.0 - p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassBoundReport {
    pub alpha: f64,
    pub p: f64,
    pub horizon: f64,
    /// `β_L` from the trace; the bound is `m_eff ≥ c · β_L`.
    pub beta_l: f64,
    pub symbolic: String,
    /// `α^{4/(2-p)} / (log α)^{(4+2p)/(2-p)}`.
    pub scale: f64,
    /// `T/scale + scale^{-1/2}`, i.e. `T(log α)⁶/α⁴ + (log α)³/α²` at `p = 1`.
    pub displacement_bound: f64,
    /// `T/β_L + β_L^{-1/2}` from the trace itself.
    pub trace_displacement: f64,
    /// Failure-probability budget `L · α^{-10}`.
    pub delta_budget: f64,
}

pub fn mass_bound(trace: &RecursionTrace, horizon: f64) -> MassBoundReport {
    let scale = fixed_point_scale(trace.alpha, trace.p);
    let p = trace.p;
    MassBoundReport {
        alpha: trace.alpha,
        p,
        horizon,
        beta_l: trace.beta_l,
        symbolic: format!("m_eff >= c * alpha^{} / (log alpha)^{}", 4.0 / (2.0 - p), (4.0 + 2.0 * p) / (2.0 - p)),
        scale,
        displacement_bound: horizon / scale + scale.powf(-0.5),
        trace_displacement: horizon / trace.beta_l + trace.beta_l.powf(-0.5),
        delta_budget: trace.stop_index as f64 * trace.alpha.powf(-10.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn first_radius_at_e() {
        let t = recursion_run(std::f64::consts::E, 1.0, &RecursionConstants::default()).unwrap();
        assert_relative_eq!(t.steps[0].r, 1e4, max_relative = 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let c = RecursionConstants::default();
        assert!(recursion_run(1.5, 1.0, &c).is_err());
        assert!(recursion_run(10.0, 2.0, &c).is_err());
        assert!(recursion_run(10.0, 0.0, &c).is_err());
        let small = RecursionConstants { c_decomp: 50.0, ..c };
        assert!(recursion_run(10.0, 1.0, &small).is_err());
    }

    #[test]
    fn beta_log_form_needs_large_beta() {
        let c = RecursionConstants { log_factor: LogFactor::Beta, ..Default::default() };
        assert!(matches!(recursion_run(1e3, 1.0, &c), Err(Error::NonPositiveLog { .. })));
    }

    #[test]
    fn doubling_alpha_scale_identity() {
        for &a in &[10.0_f64, 1e3, 1e6] {
            let ratio = fixed_point_scale(2.0 * a, 1.0) / fixed_point_scale(a, 1.0);
            let expect = 16.0 * (a.ln() / (2.0 * a).ln()).powi(6);
            assert_relative_eq!(ratio, expect, max_relative = 1e-12);
        }
    }
}
