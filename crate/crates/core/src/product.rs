//! Brute-force product decomposition of the polaron measure over good/bad
//! interval labels, for short horizons with one lattice step per unit time.
//!
//! Each unit increment `Δ_i ~ N(0, 1)` is split as `(1-δ')ν_good + δ'ν_bad`
//! using the slab `{|Δ| ≤ h}` and a [`SigmaProfile`]. Labels are bit masks:
//! bit `i` set means interval `i` is bad. Expectations of the interaction
//! weight `W` under every product `Π_i ν_{γ_i}` come from tensor
//! Gauss–Legendre quadrature.

use gauss_quad::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::decomposition::SigmaProfile;
use crate::error::{Error, Result};
use crate::mixture::{Component, MixtureDecomposition};
use crate::polaron::potential_va;

/// Longest horizon handled.
pub const MAX_HORIZON: usize = 8;

/// Integration range for a unit Gaussian coordinate.
const TAIL: f64 = 9.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductSetup {
    pub horizon: usize,
    pub alpha: f64,
    pub cutoff: f64,
    pub p: f64,
    /// Slab half-width `h`.
    pub half_width: f64,
    pub c1: f64,
    /// Gauss–Legendre order on each panel.
    pub order: usize,
}

impl Default for ProductSetup {
    fn default() -> Self {
        Self { horizon: 4, alpha: 0.5, cutoff: 2.0, p: 1.0, half_width: 1.7, c1: 1.5, order: 3 }
    }
}

/// One-dimensional quadrature of the interval split.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSplit {
    pub profile: SigmaProfile,
    pub nodes: Vec<f64>,
    /// Gaussian weights `φ(x) dx`, normalized to total mass 1.
    pub base: Vec<f64>,
    /// `base · ρ_good` and `base · ρ_bad`.
    pub good: Vec<f64>,
    pub bad: Vec<f64>,
    pub delta: f64,
    pub delta_prime: f64,
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn composite_rule(breaks: &[f64], order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let rule = GaussLegendre::new(order).map_err(|e| Error::InvalidArgument(format!("quadrature order {order}: {e}")))?;
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for pair in breaks.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b <= a {
            continue;
        }
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        for &(x, w) in rule.as_node_weight_pairs() {
            nodes.push(mid + half * x);
            weights.push(half * w);
        }
    }
    Ok((nodes, weights))
}

impl IntervalSplit {
    pub fn new(half_width: f64, c1: f64, order: usize) -> Result<Self> {
        if !(half_width > 0.0) || !(c1 > 0.0) || order < 2 {
            return Err(Error::InvalidArgument("need h > 0, C1 > 0 and order >= 2".into()));
        }
        let delta = statrs::function::erf::erfc(half_width / std::f64::consts::SQRT_2);
        let profile = SigmaProfile::from_delta(delta, c1)?;
        let s = profile.c1 * profile.level;
        let w = profile.width;
        let mut right: Vec<f64> = [0.0, 1.0, 1.0 + s, 1.0 + 2.0 * s + 2.0 * w]
            .iter()
            .map(|b| half_width + b)
            .filter(|&x| x < TAIL)
            .collect();
        right.insert(0, 0.0);
        right.push(TAIL);
        let mut breaks: Vec<f64> = right.iter().rev().map(|x| -x).collect();
        breaks.extend_from_slice(&right[1..]);
        let (nodes, qw) = composite_rule(&breaks, order)?;
        let mut base: Vec<f64> = nodes.iter().zip(&qw).map(|(x, w)| w * normal_pdf(*x)).collect();
        let mass: f64 = base.iter().sum();
        base.iter_mut().for_each(|b| *b /= mass);
        let bad_w: Vec<f64> = nodes.iter().map(|x| (-profile.value((x.abs() - half_width).max(0.0))).exp()).collect();
        let delta_prime: f64 = base.iter().zip(&bad_w).map(|(b, e)| b * e).sum();
        if !(delta_prime > 0.0 && delta_prime < 1.0) {
            return Err(Error::PreconditionFailed(format!("degenerate split, delta' = {delta_prime}")));
        }
        let good = base.iter().zip(&bad_w).map(|(b, e)| b * (1.0 - e) / (1.0 - delta_prime)).collect();
        let bad = base.iter().zip(&bad_w).map(|(b, e)| b * e / delta_prime).collect();
        Ok(Self { profile, nodes, base, good, bad, delta, delta_prime })
    }

    /// `ρ_good(x)` and `ρ_bad(x)` relative to `N(0, 1)`.
    pub fn densities(&self, x: f64, half_width: f64) -> (f64, f64) {
        let e = (-self.profile.value((x.abs() - half_width).max(0.0))).exp();
        ((1.0 - e) / (1.0 - self.delta_prime), e / self.delta_prime)
    }
}

/// `w(γ) = (1-δ')^{#good} δ'^{#bad}` for every label mask.
pub fn prior_weights(horizon: usize, delta_prime: f64) -> Vec<f64> {
    (0..1usize << horizon)
        .map(|g| {
            let bad = g.count_ones() as i32;
            (1.0 - delta_prime).powi(horizon as i32 - bad) * delta_prime.powi(bad)
        })
        .collect()
}

/// Interaction energy for unit steps, `Σ_{j,l<T} e^{-|j-l|} V_A(|B_j - B_l|)`.
pub fn unit_energy(increments: &[f64], horizon: usize, cutoff: f64, p: f64) -> f64 {
    let mut b = vec![0.0; horizon];
    for j in 1..horizon {
        b[j] = b[j - 1] + increments[j - 1];
    }
    let mut e = horizon as f64 * potential_va(0.0, cutoff, p);
    for j in 0..horizon {
        for l in j + 1..horizon {
            e += 2.0 * (-((l - j) as f64)).exp() * potential_va((b[j] - b[l]).abs(), cutoff, p);
        }
    }
    e
}

/// `W / W(0)` on the tensor grid of the first `T-1` increments (the last one
/// does not enter the energy). Row-major, first increment slowest.
pub fn weight_grid(setup: &ProductSetup, split: &IntervalSplit) -> Vec<f64> {
    let t = setup.horizon;
    let dims = t.saturating_sub(1);
    let n = split.nodes.len();
    let e0 = unit_energy(&vec![0.0; dims], t, setup.cutoff, setup.p);
    let total = n.pow(dims as u32);
    let mut x = vec![0.0; dims];
    (0..total)
        .map(|mut idx| {
            for k in (0..dims).rev() {
                x[k] = split.nodes[idx % n];
                idx /= n;
            }
            (setup.alpha * (unit_energy(&x, t, setup.cutoff, setup.p) - e0)).exp()
        })
        .collect()
}

/// `E^{P_γ}[W/W(0)]` for every mask by contracting one axis at a time.
pub fn contracted_expectations(grid: &[f64], split: &IntervalSplit, horizon: usize) -> Vec<f64> {
    let n = split.nodes.len();
    let dims = horizon.saturating_sub(1);
    // Tensors indexed by the labels of the already contracted trailing axes;
    // axis k ends up at bit k of the index.
    let mut tensors: Vec<Vec<f64>> = vec![grid.to_vec()];
    for _ in 0..dims {
        let mut next = Vec::with_capacity(tensors.len() * 2);
        for tensor in &tensors {
            for v in [&split.good, &split.bad] {
                let out: Vec<f64> = tensor.chunks_exact(n).map(|row| row.iter().zip(v.iter()).map(|(a, b)| a * b).sum()).collect();
                next.push(out);
            }
        }
        tensors = next;
    }
    let reduced: Vec<f64> = tensors.into_iter().map(|t| t[0]).collect();
    let low = (1usize << dims) - 1;
    (0..1usize << horizon).map(|mask| reduced[mask & low]).collect()
}

/// `E^{P_γ}[W/W(0)]` for one mask by a full tensor sum.
pub fn direct_expectation(grid: &[f64], split: &IntervalSplit, horizon: usize, mask: usize) -> f64 {
    let n = split.nodes.len();
    let dims = horizon.saturating_sub(1);
    let vecs: Vec<&[f64]> = (0..dims).map(|k| if (mask >> k) & 1 == 1 { &split.bad[..] } else { &split.good[..] }).collect();
    full_sum(grid, n, &vecs)
}

fn full_sum(grid: &[f64], n: usize, vecs: &[&[f64]]) -> f64 {
    fn rec(grid: &[f64], n: usize, vecs: &[&[f64]], offset: usize, acc: f64) -> f64 {
        match vecs {
            [] => acc * grid[offset],
            [last] => acc * grid[offset * n..(offset + 1) * n].iter().zip(last.iter()).map(|(g, v)| g * v).sum::<f64>(),
            [first, rest @ ..] => (0..n).map(|i| rec(grid, n, rest, offset * n + i, acc * first[i])).sum(),
        }
    }
    rec(grid, n, vecs, 0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductReport {
    pub horizon: usize,
    pub delta: f64,
    pub delta_prime: f64,
    pub prior: Vec<f64>,
    /// `ŵ` from Bayes-rule reweighting of the product mixture.
    pub mixture: Vec<f64>,
    /// `ŵ = w(γ) E_γ[W] / E_P[W]` with both expectations by full tensor sums.
    pub direct: Vec<f64>,
    pub max_abs_diff: f64,
    /// `Σ_γ ŵ(γ) · #good(γ)`.
    pub expected_good: f64,
    /// Reweighted probability that interval `i` is good.
    pub good_marginals: Vec<f64>,
}

/// Reweight the `2^T` product mixture by `W` and compare with direct weights.
pub fn product_reweight_check(setup: &ProductSetup) -> Result<ProductReport> {
    let t = setup.horizon;
    if t == 0 || t > MAX_HORIZON {
        return Err(Error::InvalidArgument(format!("horizon must lie in 1..={MAX_HORIZON}, got {t}")));
    }
    if !(setup.alpha >= 0.0) || !(setup.cutoff > 0.0) {
        return Err(Error::InvalidArgument("need alpha >= 0 and A > 0".into()));
    }
    let split = IntervalSplit::new(setup.half_width, setup.c1, setup.order)?;
    let grid = weight_grid(setup, &split);
    let n = split.nodes.len();
    let prior = prior_weights(t, split.delta_prime);

    let h = setup.half_width;
    let components = (0..1usize << t)
        .map(|mask| {
            let s = split.clone();
            Component::new(format!("{mask:0t$b}"), move |x: &[f64]| {
                (0..t)
                    .map(|i| {
                        let (g, b) = s.densities(x[i], h);
                        if (mask >> i) & 1 == 1 { b } else { g }
                    })
                    .product()
            })
        })
        .collect();
    let mixture = MixtureDecomposition::new(prior.clone(), components)?;
    let expect = contracted_expectations(&grid, &split, t);
    let (alpha, cutoff, p) = (setup.alpha, setup.cutoff, setup.p);
    let e0 = unit_energy(&vec![0.0; t - 1], t, cutoff, p);
    let reweighted = mixture.reweight(
        std::sync::Arc::new(move |x: &[f64]| (alpha * (unit_energy(x, t, cutoff, p) - e0)).exp()),
        &|j, _| expect[j],
    )?;

    let base_vecs: Vec<&[f64]> = (0..t - 1).map(|_| &split.base[..]).collect();
    let z = full_sum(&grid, n, &base_vecs);
    if !(z > 0.0) {
        return Err(Error::ZeroExpectation);
    }
    let low = (1usize << (t - 1)) - 1;
    let direct_e: Vec<f64> = (0..=low).map(|m| direct_expectation(&grid, &split, t, m)).collect();
    let direct: Vec<f64> = (0..1usize << t).map(|m| prior[m] * direct_e[m & low] / z).collect();
    let weights = reweighted.weights().to_vec();
    let max_abs_diff = weights.iter().zip(&direct).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let expected_good = weights.iter().enumerate().map(|(m, w)| w * (t - m.count_ones() as usize) as f64).sum();
    let good_marginals = (0..t)
        .map(|i| {
            let good: Vec<usize> = (0..1usize << t).filter(|m| (m >> i) & 1 == 0).collect();
            let bad: Vec<usize> = (0..1usize << t).filter(|m| (m >> i) & 1 == 1).collect();
            reweighted.coarsen(&[good, bad]).map(|c| c.weights()[0])
        })
        .collect::<Result<_>>()?;
    Ok(ProductReport {
        horizon: t,
        delta: split.delta,
        delta_prime: split.delta_prime,
        prior,
        mixture: weights,
        direct,
        max_abs_diff,
        expected_good,
        good_marginals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_a_partition_of_unity() {
        let s = IntervalSplit::new(1.7, 1.5, 24).unwrap();
        for (i, b) in s.base.iter().enumerate() {
            let back = (1.0 - s.delta_prime) * s.good[i] + s.delta_prime * s.bad[i];
            assert!((back - b).abs() < 1e-15);
        }
        assert!((s.good.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((s.bad.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(s.delta_prime <= s.delta, "{} > {}", s.delta_prime, s.delta);
    }

    #[test]
    fn small_c1_loses_delta_prime_bound() {
        let s = IntervalSplit::new(1.7, 1.0, 24).unwrap();
        assert!(s.delta_prime > s.delta);
    }

    #[test]
    fn base_rule_integrates_moments() {
        let s = IntervalSplit::new(1.7, 1.5, 24).unwrap();
        let m2: f64 = s.nodes.iter().zip(&s.base).map(|(x, w)| w * x * x).sum();
        let m4: f64 = s.nodes.iter().zip(&s.base).map(|(x, w)| w * x.powi(4)).sum();
        assert!((m2 - 1.0).abs() < 1e-10 && (m4 - 3.0).abs() < 1e-9, "{m2} {m4}");
    }

    #[test]
    fn zero_alpha_leaves_prior() {
        let r = product_reweight_check(&ProductSetup { alpha: 0.0, horizon: 3, ..Default::default() }).unwrap();
        for (a, b) in r.mixture.iter().zip(&r.prior) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn contraction_matches_direct_sums() {
        let setup = ProductSetup { horizon: 4, ..Default::default() };
        let s = IntervalSplit::new(setup.half_width, setup.c1, setup.order).unwrap();
        let grid = weight_grid(&setup, &s);
        let c = contracted_expectations(&grid, &s, 4);
        for m in 0..16 {
            let d = direct_expectation(&grid, &s, 4, m);
            assert!((c[m] - d).abs() < 1e-13 * d.max(1.0), "{m}: {} vs {d}", c[m]);
        }
    }
}
