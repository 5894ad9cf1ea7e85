//! Monte Carlo checks of the Gaussian correlation inequality and of the
//! consequences of Gaussian domination.
//!
//! All comparisons are paired: the three probabilities (or expectations) of a
//! test are estimated from the same draws, and the standard error of the
//! margin comes from independent replicates.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::body::ConvexBody;
use crate::error::{Error, Result};
use crate::gaussian::GaussianMeasure;
use crate::qmc::NormalPoints;
use crate::stats::{batch_means, replicate_estimate, Estimate, BATCHES};

/// Replicates used for every standard error in this module.
pub const REPLICATES: usize = 32;

/// Width of the tie band, in standard errors.
pub const TIE_BAND: f64 = 3.0;

/// Absolute floor of the tie band, for margins that are exact up to rounding.
pub const ROUNDOFF: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    StatisticalTie,
    Fail,
}

impl Verdict {
    pub fn from_margin(margin: f64, stderr: f64) -> Self {
        let band = TIE_BAND * stderr + ROUNDOFF;
        if margin > band {
            Verdict::Pass
        } else if margin < -band {
            Verdict::Fail
        } else {
            Verdict::StatisticalTie
        }
    }
}

/// `lhs = P(A)·P(B)` (product side), `rhs = P(A ∩ B)`, `margin = rhs - lhs ≥ 0` under GCI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GciReport {
    pub lhs: f64,
    pub rhs: f64,
    pub stderr_l: f64,
    pub stderr_r: f64,
    pub margin: f64,
    pub stderr: f64,
    pub verdict: Verdict,
}

/// Dense upper-triangular `L^{-T}` so that `x_c = U z_c`.
fn unwhiten_matrix(mu: &GaussianMeasure) -> DMatrix<f64> {
    let n = mu.dim();
    let mut u = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n * mu.coords()];
        e[j * mu.coords()] = 1.0;
        let col = mu.unwhiten(&e);
        for i in 0..n {
            u[(i, j)] = col[i * mu.coords()];
        }
    }
    u
}

/// Apply `f` to every point of one replicate after mapping it to `mu`'s coordinates.
fn for_each_point(mu: &GaussianMeasure, u: &DMatrix<f64>, z: &[f64], dim: usize, mut f: impl FnMut(&[f64])) {
    let (n, d) = (mu.dim(), mu.coords());
    let mut x = vec![0.0; dim];
    for p in z.chunks_exact(dim) {
        for c in 0..d {
            for i in 0..n {
                let mut s = 0.0;
                for j in i..n {
                    s += u[(i, j)] * p[j * d + c];
                }
                x[i * d + c] = s;
            }
        }
        f(&x);
    }
}

fn check_points(mu: &GaussianMeasure, points: &NormalPoints) -> Result<()> {
    if points.dim != mu.flat_len() {
        return Err(Error::DimensionMismatch { expected: mu.flat_len(), found: points.dim });
    }
    Ok(())
}

/// Paired estimate of `E[Π_{j<m} f_j]`, `E[Π_{j≥m} f_j]` and `E[Π f_j]` from replicated draws.
fn paired_products(
    mu: &GaussianMeasure,
    points: &NormalPoints,
    fs: &[&(dyn Fn(&[f64]) -> f64 + Sync)],
    split: usize,
) -> Result<GciReport> {
    check_points(mu, points)?;
    let u = unwhiten_matrix(mu);
    let mut lhs_r = Vec::with_capacity(points.replicates.len());
    let mut rhs_r = Vec::with_capacity(points.replicates.len());
    let mut a_r = Vec::new();
    let mut b_r = Vec::new();
    let mut m_r = Vec::new();
    for z in &points.replicates {
        let (mut sa, mut sb, mut sab) = (0.0, 0.0, 0.0);
        for_each_point(mu, &u, z, points.dim, |x| {
            let a: f64 = fs[..split].iter().map(|f| f(x)).product();
            let b: f64 = fs[split..].iter().map(|f| f(x)).product();
            sa += a;
            sb += b;
            sab += a * b;
        });
        let k = points.per_replicate as f64;
        let (pa, pb, pab) = (sa / k, sb / k, sab / k);
        a_r.push(pa);
        b_r.push(pb);
        lhs_r.push(pa * pb);
        rhs_r.push(pab);
        m_r.push(pab - pa * pb);
    }
    let pa = replicate_estimate(&a_r).mean;
    let pb = replicate_estimate(&b_r).mean;
    let rhs = replicate_estimate(&rhs_r);
    let lhs = pa * pb;
    let margin = rhs.mean - lhs;
    let stderr = replicate_estimate(&m_r).stderr;
    Ok(GciReport {
        lhs,
        rhs: rhs.mean,
        stderr_l: replicate_estimate(&lhs_r).stderr,
        stderr_r: rhs.stderr,
        margin,
        stderr,
        verdict: Verdict::from_margin(margin, stderr),
    })
}

fn indicator(k: &ConvexBody) -> impl Fn(&[f64]) -> f64 + Sync + '_ {
    move |x: &[f64]| if k.contains(x) { 1.0 } else { 0.0 }
}

/// `μ(K₁)μ(K₂) ≤ μ(K₁ ∩ K₂)` on shared points.
pub fn gci_pair_test_with(mu: &GaussianMeasure, k1: &ConvexBody, k2: &ConvexBody, points: &NormalPoints) -> Result<GciReport> {
    let f1 = indicator(k1);
    let f2 = indicator(k2);
    paired_products(mu, points, &[&f1, &f2], 1)
}

/// Pair test with `n` fresh points (quasi-random for dimension ≤ 6).
pub fn gci_pair_test(mu: &GaussianMeasure, k1: &ConvexBody, k2: &ConvexBody, n: usize, seed: u64) -> Result<GciReport> {
    let points = NormalPoints::generate(mu.flat_len(), n, REPLICATES, seed)?;
    gci_pair_test_with(mu, k1, k2, &points)
}

/// `E[Π_{j<m} f_j] · E[Π_{j≥m} f_j] ≤ E[Π f_j]` on shared points.
pub fn gci_functional_test_with(
    mu: &GaussianMeasure,
    fs: &[&(dyn Fn(&[f64]) -> f64 + Sync)],
    split: usize,
    points: &NormalPoints,
) -> Result<GciReport> {
    if split == 0 || split >= fs.len() {
        return Err(Error::InvalidArgument(format!("split {split} must leave both groups nonempty")));
    }
    paired_products(mu, points, fs, split)
}

pub fn gci_functional_test(
    mu: &GaussianMeasure,
    fs: &[&(dyn Fn(&[f64]) -> f64 + Sync)],
    split: usize,
    n: usize,
    seed: u64,
) -> Result<GciReport> {
    let points = NormalPoints::generate(mu.flat_len(), n, REPLICATES, seed)?;
    gci_functional_test_with(mu, fs, split, &points)
}

/// One comparison between a candidate `ν` and the reference `μ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominationEntry {
    pub nu: Estimate,
    pub mu: Estimate,
    /// `ν(K) - μ(K)` for bodies and `E^μ f - E^ν f` for convex functions.
    pub margin: f64,
    pub stderr: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub bodies: Vec<DominationEntry>,
    pub functions: Vec<DominationEntry>,
}

impl DominationReport {
    pub fn failures(&self) -> usize {
        self.bodies.iter().chain(&self.functions).filter(|e| e.verdict == Verdict::Fail).count()
    }
}

fn entry(nu: Estimate, mu: Estimate, margin: f64) -> DominationEntry {
    let stderr = (nu.stderr.powi(2) + mu.stderr.powi(2)).sqrt();
    DominationEntry { nu, mu, margin, stderr, verdict: Verdict::from_margin(margin, stderr) }
}

/// Compare `ν` (given by a sampler that may return correlated draws) against `μ`
/// on symmetric convex bodies (`ν(K) ≥ μ(K)`) and symmetric convex functions
/// (`E^ν f ≤ E^μ f`).
pub fn domination_test(
    nu_sampler: &dyn Fn(usize, u64) -> Result<Vec<Vec<f64>>>,
    mu: &GaussianMeasure,
    bodies: &[ConvexBody],
    convex_fns: &[&dyn Fn(&[f64]) -> f64],
    n: usize,
    seed: u64,
) -> Result<DominationReport> {
    let nu_draws = nu_sampler(n, seed)?;
    let mu_draws = mu.sample(n, seed ^ 0x5eed_5eed_5eed_5eed)?;
    let estimate = |draws: &[Vec<f64>], f: &dyn Fn(&[f64]) -> f64| {
        let v: Vec<f64> = draws.iter().map(|x| f(x)).collect();
        batch_means(&v, BATCHES)
    };
    let bodies = bodies
        .iter()
        .map(|k| {
            let f = indicator(k);
            let (nu, m) = (estimate(&nu_draws, &f), estimate(&mu_draws, &f));
            entry(nu, m, nu.mean - m.mean)
        })
        .collect();
    let functions = convex_fns
        .iter()
        .map(|f| {
            let (nu, m) = (estimate(&nu_draws, *f), estimate(&mu_draws, *f));
            entry(nu, m, m.mean - nu.mean)
        })
        .collect();
    Ok(DominationReport { bodies, functions })
}

/// `E^μ‖x‖² - E^ν‖x‖²` from covariance traces, no sampling.
pub fn trace_margin(nu: &GaussianMeasure, mu: &GaussianMeasure) -> Result<f64> {
    if nu.dim() != mu.dim() || nu.coords() != mu.coords() {
        return Err(Error::DimensionMismatch { expected: mu.flat_len(), found: nu.flat_len() });
    }
    let d = mu.coords() as f64;
    Ok(d * (mu.covariance().trace() - nu.covariance().trace()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_bands() {
        assert_eq!(Verdict::from_margin(1.0, 0.1), Verdict::Pass);
        assert_eq!(Verdict::from_margin(0.2, 0.1), Verdict::StatisticalTie);
        assert_eq!(Verdict::from_margin(-0.31, 0.1), Verdict::Fail);
    }

    #[test]
    fn identical_bodies_margin_is_p_one_minus_p() {
        let mu = GaussianMeasure::standard(2).unwrap();
        let k = ConvexBody::slab(vec![1.0, 0.0], 1.0).unwrap();
        let r = gci_pair_test(&mu, &k, &k, 1 << 14, 5).unwrap();
        let p = r.rhs;
        assert!((r.margin - p * (1.0 - p)).abs() < 1e-3);
        assert_eq!(r.verdict, Verdict::Pass);
    }

    #[test]
    fn constant_functions_are_exact() {
        let mu = GaussianMeasure::standard(2).unwrap();
        let c = |_: &[f64]| 0.5;
        let r = gci_functional_test(&mu, &[&c, &c, &c], 1, 1 << 10, 1).unwrap();
        assert!((r.lhs - 0.125).abs() < 1e-15 && (r.rhs - 0.125).abs() < 1e-15);
        assert_eq!(r.stderr, 0.0);
        assert_eq!(r.verdict, Verdict::StatisticalTie);
    }
}
