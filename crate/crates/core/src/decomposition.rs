//! Good/bad mixture decomposition of a Gaussian measure around a symmetric
//! convex body.
//!
//! Everything here works in the whitened coordinates `z = Lᵀx` of the measure,
//! where it is a standard Gaussian; the body is given in those coordinates.
//! With `d(z)` the distance to the body and `σ` a smoothed radial profile,
//! the bad part has density `∝ e^{-σ(d(z))}` and the good part `∝ 1 - e^{-σ(d(z))}`.

use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::body::{ConvexBody, ProjectionOptions};
use crate::error::{Error, Result};
use crate::gaussian::GaussianMeasure;
use crate::stats::{batch_means, Estimate, BATCHES};

/// Unsmoothed profile: flat at `R²` on `[0, 1]`, two joined quadratics, then zero.
pub fn sigma_tilde(r: f64, level: f64, c1: f64) -> Result<f64> {
    if !(level > 0.0) || !(c1 > 0.0) {
        return Err(Error::InvalidArgument("R and C1 must be positive".into()));
    }
    let knee = c1 * level + 1.0;
    let end = 2.0 * c1 * level + 1.0;
    let v = if r <= 1.0 {
        level * level
    } else if r <= knee {
        level * level - (r - 1.0).powi(2) / (2.0 * c1 * c1)
    } else if r <= end {
        (end - r).powi(2) / (2.0 * c1 * c1)
    } else {
        0.0
    };
    Ok(v)
}

const BUMP_NODES: usize = 96;

fn bump_rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(BUMP_NODES).expect("degree >= 2"))
}

/// Unnormalized standard bump on `(-1, 1)`.
fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp()
    }
}

fn bump_mass() -> f64 {
    static MASS: OnceLock<f64> = OnceLock::new();
    *MASS.get_or_init(|| bump_rule().integrate(-1.0, 1.0, bump))
}

/// Radial profile `σ = σ̃(· - w) * φ_w` with a bump mollifier of half-width `w`.
///
/// The shift by `w` keeps `σ = R²` on all of `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaProfile {
    pub level: f64,
    pub c1: f64,
    pub width: f64,
}

impl SigmaProfile {
    pub fn new(level: f64, c1: f64) -> Result<Self> {
        if !(level >= 0.0) || !(c1 > 0.0) {
            return Err(Error::InvalidArgument("R must be nonnegative and C1 positive".into()));
        }
        Ok(Self { level, c1, width: c1.min(1.0) / 10.0 })
    }

    /// `R = C₁ √(log 1/δ)`.
    pub fn from_delta(delta: f64, c1: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
        }
        Self::new(c1 * (1.0 / delta).ln().sqrt(), c1)
    }

    fn breakpoints(&self) -> [f64; 3] {
        let s = self.c1 * self.level;
        [1.0, s + 1.0, 2.0 * s + 1.0]
    }

    /// Distance beyond which `σ` vanishes identically.
    pub fn support_end(&self) -> f64 {
        self.breakpoints()[2] + 2.0 * self.width
    }

    /// `(M₀, M₁, M₂)` with `M_k(u) = ∫_{-w}^{min(u,w)} y^k φ_w(y) dy`.
    fn moments(&self, u: f64) -> (f64, f64, f64) {
        let w = self.width;
        if u <= -w {
            return (0.0, 0.0, 0.0);
        }
        let hi = (u / w).min(1.0);
        let z = bump_mass();
        let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
        let half = 0.5 * (hi + 1.0);
        for &(x, wt) in bump_rule().as_node_weight_pairs() {
            let s = half * x + (half - 1.0);
            let f = wt * half * bump(s) / z;
            m0 += f;
            m1 += f * s * w;
            m2 += f * s * s * w * w;
        }
        (m0, m1, m2)
    }

    /// `(g, g', g'')` for `g(a) = ∫ (a - y)₊² φ_w(y) dy`.
    fn smoothed_square(&self, a: f64) -> (f64, f64, f64) {
        let (m0, m1, m2) = self.moments(a);
        (a * a * m0 - 2.0 * a * m1 + m2, 2.0 * (a * m0 - m1), 2.0 * m0)
    }

    /// `(σ, σ', σ'')` at `r`.
    pub fn eval(&self, r: f64) -> (f64, f64, f64) {
        let r2 = self.level * self.level;
        if r <= 1.0 {
            return (r2, 0.0, 0.0);
        }
        if r >= self.support_end() {
            return (0.0, 0.0, 0.0);
        }
        let k = 1.0 / (2.0 * self.c1 * self.c1);
        let mut out = (r2, 0.0, 0.0);
        for (b, c) in self.breakpoints().into_iter().zip([1.0, -2.0, 1.0]) {
            let (g, g1, g2) = self.smoothed_square(r - self.width - b);
            out.0 -= k * c * g;
            out.1 -= k * c * g1;
            out.2 -= k * c * g2;
        }
        out.0 = out.0.clamp(0.0, r2);
        out
    }

    pub fn value(&self, r: f64) -> f64 {
        self.eval(r).0
    }

    /// Check the five shape properties on an even grid of `points` radii.
    pub fn verify(&self, points: usize, slack: f64) -> ProfileCheck {
        let r2 = self.level * self.level;
        let top = 3.0 * self.c1 * self.level;
        let hi = top.max(self.support_end()) * 1.1 + 1.0;
        let mut check = ProfileCheck::default();
        let mut prev = f64::INFINITY;
        for i in 0..=points {
            let r = hi * i as f64 / points as f64;
            let (s, d1, d2) = self.eval(r);
            if s < -slack || s > r2 + slack {
                check.range_violations += 1;
            }
            if s > prev + slack {
                check.monotone_violations += 1;
            }
            prev = s;
            if r <= 1.0 && (s - r2).abs() > slack {
                check.flat_violations += 1;
            }
            if r >= top && s.abs() > slack {
                check.tail_violations += 1;
            }
            if d1.abs() > (r - 1.0).max(0.0) / self.c1 + slack {
                check.slope_violations += 1;
            }
            if d2.abs() > 1.0 / self.c1 + slack {
                check.curvature_violations += 1;
            }
        }
        check
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileCheck {
    pub range_violations: usize,
    pub monotone_violations: usize,
    pub flat_violations: usize,
    pub tail_violations: usize,
    pub slope_violations: usize,
    pub curvature_violations: usize,
}

impl ProfileCheck {
    pub fn total(&self) -> usize {
        self.range_violations
            + self.monotone_violations
            + self.flat_violations
            + self.tail_violations
            + self.slope_violations
            + self.curvature_violations
    }
}

/// A completed good/bad decomposition of `mu`.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub mu: GaussianMeasure,
    /// Body in whitened coordinates.
    pub body: ConvexBody,
    pub profile: SigmaProfile,
    /// `1 - μ(K)`.
    pub delta: Estimate,
    /// Mass of the bad part, `E^μ[e^{-σ(d)}]`.
    pub delta_prime: Estimate,
    pub projection: ProjectionOptions,
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Estimate `δ` and `δ'` from `n_mc` draws and assemble the decomposition.
///
/// Fails when `μ(K) < 0.9`.
pub fn decompose(
    mu: &GaussianMeasure,
    body: &ConvexBody,
    profile: SigmaProfile,
    n_mc: usize,
    seed: u64,
) -> Result<Decomposition> {
    if n_mc == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    let projection = ProjectionOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = mu.flat_len();
    let mut outside = Vec::with_capacity(n_mc);
    let mut bad = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        let z = standard_normal(&mut rng, n);
        outside.push(if body.contains(&z) { 0.0 } else { 1.0 });
        let d = body.distance(&z, projection)?;
        bad.push((-profile.value(d)).exp());
    }
    let delta = batch_means(&outside, BATCHES);
    if delta.mean > 0.1 {
        return Err(Error::PreconditionFailed(format!("mu(K) = {:.4} < 0.9", 1.0 - delta.mean)));
    }
    Ok(Decomposition {
        mu: mu.clone(),
        body: body.clone(),
        profile,
        delta,
        delta_prime: batch_means(&bad, BATCHES),
        projection,
    })
}

impl Decomposition {
    /// `e^{-σ(d(z))}` at a whitened point.
    pub fn bad_weight(&self, z: &[f64]) -> Result<f64> {
        Ok((-self.profile.value(self.body.distance(z, self.projection)?)).exp())
    }

    /// `dν_good/dμ` at a whitened point.
    pub fn good_density(&self, z: &[f64]) -> Result<f64> {
        Ok((1.0 - self.bad_weight(z)?) / (1.0 - self.delta_prime.mean))
    }

    /// `dν_bad/dμ` at a whitened point.
    pub fn bad_density(&self, z: &[f64]) -> Result<f64> {
        Ok(self.bad_weight(z)? / self.delta_prime.mean)
    }

    fn rejection(&self, count: usize, seed: u64, good: bool) -> Result<Vec<Vec<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.mu.flat_len();
        let cap = count.saturating_mul(10_000).max(1_000_000);
        let mut out = Vec::with_capacity(count);
        let mut attempts = 0;
        while out.len() < count {
            if attempts >= cap {
                return Err(Error::SamplerExhausted { attempts });
            }
            attempts += 1;
            let z = standard_normal(&mut rng, n);
            let b = self.bad_weight(&z)?;
            let accept = if good { 1.0 - b } else { b };
            if rng.random::<f64>() < accept {
                out.push(z);
            }
        }
        Ok(out)
    }

    /// Draws from the good part, in whitened coordinates.
    pub fn sample_good_whitened(&self, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        self.rejection(count, seed, true)
    }

    /// Draws from the bad part, in whitened coordinates.
    pub fn sample_bad_whitened(&self, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        self.rejection(count, seed, false)
    }

    /// Draws from the good part in the measure's own coordinates.
    pub fn sample_good(&self, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        Ok(self.sample_good_whitened(count, seed)?.iter().map(|z| self.mu.unwhiten(z)).collect())
    }

    pub fn sample_bad(&self, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        Ok(self.sample_bad_whitened(count, seed)?.iter().map(|z| self.mu.unwhiten(z)).collect())
    }

    /// Dilation factor `4C₁³` containing the good support.
    pub fn support_dilation(&self) -> f64 {
        4.0 * self.profile.c1.powi(3)
    }

    /// Radius `R/C₁²` of the ball that should sit inside the body.
    pub fn inradius(&self) -> f64 {
        self.profile.level / self.profile.c1.powi(2)
    }

    /// Point on the ray through `u` at distance `target` from the body.
    fn point_at_distance(&self, u: &[f64], target: f64) -> Result<Vec<f64>> {
        let at = |t: f64| -> Vec<f64> { u.iter().map(|v| v * t).collect() };
        let mut hi = 1.0;
        while self.body.distance(&at(hi), self.projection)? < target {
            hi *= 2.0;
            if hi > 1e12 {
                return Err(Error::InvalidArgument("body is unbounded along the ray".into()));
            }
        }
        let mut lo = 0.0;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if self.body.distance(&at(mid), self.projection)? < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(at(0.5 * (lo + hi)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogConcavityReport {
    pub segments: usize,
    pub violations: usize,
    /// Largest `F(m) - (F(a)+F(b))/2` seen, `F = σ∘d + (3/8)‖·‖²`.
    pub worst_excess: f64,
}

/// Midpoint-convexity sweep of `σ(d(z)) + (3/8)‖z‖²` on random segments.
///
/// Half of the segments are centred at points whose distance to the body is
/// drawn from the range where `σ` varies; half-lengths are log-uniform over
/// `[1e-4, 1]`.
pub fn logconcavity_check(decomp: &Decomposition, n_lines: usize, seed: u64, tol: f64) -> Result<LogConcavityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = decomp.mu.flat_len();
    let f = |z: &[f64]| -> Result<f64> {
        let d = decomp.body.distance(z, decomp.projection)?;
        Ok(decomp.profile.value(d) + 0.375 * z.iter().map(|v| v * v).sum::<f64>())
    };
    let lo_d = (1.0 - decomp.profile.width).max(0.0);
    let hi_d = decomp.profile.support_end();
    let mut report = LogConcavityReport { segments: n_lines, violations: 0, worst_excess: f64::NEG_INFINITY };
    for i in 0..n_lines {
        let centre = if i % 2 == 0 {
            let u = standard_normal(&mut rng, n);
            let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            let u: Vec<f64> = u.iter().map(|v| v / norm).collect();
            let target = lo_d + (hi_d - lo_d) * rng.random::<f64>();
            decomp.point_at_distance(&u, target)?
        } else {
            standard_normal(&mut rng, n).iter().map(|v| 2.0 * v).collect()
        };
        let dir = standard_normal(&mut rng, n);
        let dn = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let h = 10f64.powf(-4.0 + 4.0 * rng.random::<f64>());
        let a: Vec<f64> = centre.iter().zip(&dir).map(|(c, v)| c - h * v / dn).collect();
        let b: Vec<f64> = centre.iter().zip(&dir).map(|(c, v)| c + h * v / dn).collect();
        let excess = f(&centre)? - 0.5 * (f(&a)? + f(&b)?);
        report.worst_excess = report.worst_excess.max(excess);
        if excess > tol {
            report.violations += 1;
        }
    }
    Ok(report)
}
