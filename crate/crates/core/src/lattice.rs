//! Discretized path space on `[0, T]` with mesh `η = 1/M`.
//!
//! Paths start at the origin and are parametrized by their increments
//! `Δ_j = B_{(j+1)η} - B_{jη}`, `j = 0..n`. Interval `i` owns the half-open
//! grid `{i, i+η, ..., i+1-η}`, so the intervals partition `[0, T)`.

use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{GaussianMeasure, QuadraticForm};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lattice {
    horizon: usize,
    steps_per_unit: usize,
    dim: usize,
}

impl Lattice {
    pub fn new(horizon: usize, steps_per_unit: usize, dim: usize) -> Result<Self> {
        if horizon == 0 || steps_per_unit == 0 || dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "lattice needs T, 1/eta, d >= 1 (got {horizon}, {steps_per_unit}, {dim})"
            )));
        }
        Ok(Self { horizon, steps_per_unit, dim })
    }

    /// Build from a mesh width; `1/eta` must be an integer.
    pub fn from_eta(horizon: usize, eta: f64, dim: usize) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::InvalidArgument(format!("eta must lie in (0, 1], got {eta}")));
        }
        let m = (1.0 / eta).round();
        if ((1.0 / eta) - m).abs() > 1e-9 * m {
            return Err(Error::InvalidArgument(format!("1/eta must be an integer, got {}", 1.0 / eta)));
        }
        Self::new(horizon, m as usize, dim)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn steps_per_unit(&self) -> usize {
        self.steps_per_unit
    }

    pub fn eta(&self) -> f64 {
        1.0 / self.steps_per_unit as f64
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of increments `n = T/η`.
    pub fn steps(&self) -> usize {
        self.horizon * self.steps_per_unit
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.eta()
    }

    /// Point indices of the half-open grid of interval `i`.
    pub fn grid(&self, i: usize) -> Range<usize> {
        i * self.steps_per_unit..(i + 1) * self.steps_per_unit
    }

    fn check_interval(&self, i: usize) -> Result<()> {
        if i >= self.horizon {
            return Err(Error::IndexOutOfRange { index: i, limit: self.horizon });
        }
        Ok(())
    }

    /// Path values `B_{t_j}`, `j = 0..=n`, flat with layout `[j * d + c]`.
    pub fn path_values(&self, increments: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let n = self.steps();
        let mut out = vec![0.0; (n + 1) * d];
        for j in 0..n {
            for c in 0..d {
                out[(j + 1) * d + c] = out[j * d + c] + increments[j * d + c];
            }
        }
        out
    }

    /// Inverse of [`path_values`](Self::path_values); the first point is discarded.
    pub fn increments_from_path(&self, values: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..self.steps() * d).map(|k| values[k + d] - values[k]).collect()
    }
}

/// Linear functional of the path, stored in increment coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFunctional {
    coefficients: Vec<f64>,
}

impl LinearFunctional {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite functional coefficient".into()));
        }
        Ok(Self { coefficients })
    }

    pub fn zero(lattice: &Lattice) -> Self {
        Self { coefficients: vec![0.0; lattice.steps()] }
    }

    /// `Σ_j w_j B_{t_j}` for weights on the `n + 1` path points.
    pub fn from_point_weights(lattice: &Lattice, weights: &[f64]) -> Result<Self> {
        let n = lattice.steps();
        if weights.len() != n + 1 {
            return Err(Error::DimensionMismatch { expected: n + 1, found: weights.len() });
        }
        let mut coefficients = vec![0.0; n];
        let mut tail = 0.0;
        for k in (0..n).rev() {
            tail += weights[k + 1];
            coefficients[k] = tail;
        }
        Self::new(coefficients)
    }

    /// Path value `B_{t_j}`.
    pub fn point(lattice: &Lattice, j: usize) -> Result<Self> {
        let n = lattice.steps();
        if j > n {
            return Err(Error::IndexOutOfRange { index: j, limit: n + 1 });
        }
        Ok(Self { coefficients: (0..n).map(|k| if k < j { 1.0 } else { 0.0 }).collect() })
    }

    /// Trapezoid average of the path over the closed interval `[i, i+1]`.
    pub fn interval_average(lattice: &Lattice, i: usize) -> Result<Self> {
        lattice.check_interval(i)?;
        let m = lattice.steps_per_unit();
        let eta = lattice.eta();
        let mut w = vec![0.0; lattice.steps() + 1];
        for j in i * m..=(i + 1) * m {
            w[j] = eta;
        }
        w[i * m] = 0.5 * eta;
        w[(i + 1) * m] = 0.5 * eta;
        Self::from_point_weights(lattice, &w)
    }

    /// Left Riemann average over the half-open grid of interval `i`.
    pub fn riemann_average(lattice: &Lattice, i: usize) -> Result<Self> {
        lattice.check_interval(i)?;
        let mut w = vec![0.0; lattice.steps() + 1];
        for j in lattice.grid(i) {
            w[j] = lattice.eta();
        }
        Self::from_point_weights(lattice, &w)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.coefficients.len() != other.coefficients.len() {
            return Err(Error::DimensionMismatch {
                expected: self.coefficients.len(),
                found: other.coefficients.len(),
            });
        }
        Ok(Self { coefficients: self.coefficients.iter().zip(&other.coefficients).map(|(a, b)| a - b).collect() })
    }

    /// Value on one spatial coordinate of a flat increment vector.
    pub fn apply(&self, increments: &[f64], dim: usize, coord: usize) -> f64 {
        self.coefficients.iter().enumerate().map(|(k, a)| a * increments[k * dim + coord]).sum()
    }
}

/// Dense local block `η² Σ_{j∈G1, l∈G2} (B_j - B_l)²` on the increment window
/// starting at `lo`. Point sets are given as index ranges relative to `lo`.
fn pair_block(eta: f64, width: usize, g1: Range<usize>, g2: Range<usize>) -> DMatrix<f64> {
    // g_j has ones on local increments k < j, so (Σ_{j∈G} g_j g_jᵀ)_{k,k'} = #{j ∈ G : j > max(k,k')}.
    let count_above = |g: &Range<usize>, k: usize| g.clone().filter(|&j| j > k).count() as f64;
    let n1 = g1.len() as f64;
    let n2 = g2.len() as f64;
    let s1: Vec<f64> = (0..width).map(|k| count_above(&g1, k)).collect();
    let s2: Vec<f64> = (0..width).map(|k| count_above(&g2, k)).collect();
    let same = g1 == g2;
    DMatrix::from_fn(width, width, |k, kp| {
        let top = k.max(kp);
        if same {
            eta * eta * (2.0 * n1 * s1[top] - 2.0 * s1[k] * s1[kp])
        } else {
            eta * eta * (n2 * s1[top] + n1 * s2[top] - s1[k] * s2[kp] - s2[k] * s1[kp])
        }
    })
}

fn intra_block(lattice: &Lattice, i: usize) -> (usize, DMatrix<f64>) {
    let m = lattice.steps_per_unit();
    let width = m.saturating_sub(1).max(1);
    (i * m, pair_block(lattice.eta(), width, 0..m, 0..m))
}

fn coupling_block(lattice: &Lattice, i: usize) -> (usize, DMatrix<f64>) {
    let m = lattice.steps_per_unit();
    (i * m, pair_block(lattice.eta(), 2 * m - 1, 0..m, m..2 * m))
}

fn embed(n: usize, offset: usize, block: &DMatrix<f64>) -> DMatrix<f64> {
    let mut full = DMatrix::zeros(n, n);
    full.view_mut((offset, offset), block.shape()).copy_from(block);
    full
}

/// Brownian motion on the lattice: precision `(1/η) I`.
pub fn brownian(lattice: &Lattice) -> GaussianMeasure {
    let n = lattice.steps();
    let p = DMatrix::identity(n, n) * lattice.steps_per_unit() as f64;
    GaussianMeasure::from_precision(lattice.clone(), p, "BM").expect("diagonal precision is positive definite")
}

/// Riemann form of `∫_i^{i+1}∫_i^{i+1} ‖B_t - B_s‖² dt ds`.
pub fn intra_interval_form(lattice: &Lattice, i: usize) -> Result<QuadraticForm> {
    lattice.check_interval(i)?;
    let (off, block) = intra_block(lattice, i);
    Ok(QuadraticForm::from_gram(embed(lattice.steps(), off, &block), true, format!("Q{i}")))
}

/// Riemann form of `∫_i^{i+1}∫_{i+1}^{i+2} ‖B_t - B_s‖² dt ds`.
pub fn adjacent_coupling_form(lattice: &Lattice, i: usize) -> Result<QuadraticForm> {
    if i + 1 >= lattice.horizon() {
        return Err(Error::IndexOutOfRange { index: i, limit: lattice.horizon().saturating_sub(1) });
    }
    let (off, block) = coupling_block(lattice, i);
    Ok(QuadraticForm::from_gram(embed(lattice.steps(), off, &block), true, format!("Q{i},{}", i + 1)))
}

/// Brownian motion reweighted by `exp(-β (Σ_{i∈intervals} Q_i + Σ_{i∈couplings} Q_{i,i+1}))`.
///
/// A coupling index `i` requires both `i` and `i + 1` in `intervals`.
pub fn confined_measure(
    lattice: &Lattice,
    beta: f64,
    intervals: &[usize],
    couplings: &[usize],
) -> Result<GaussianMeasure> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::InvalidArgument(format!("beta must be finite and nonnegative, got {beta}")));
    }
    let mut seen = vec![false; lattice.horizon()];
    for &i in intervals {
        lattice.check_interval(i)?;
        if seen[i] {
            return Err(Error::InvalidArgument(format!("interval {i} listed twice")));
        }
        seen[i] = true;
    }
    let mut seen_c = vec![false; lattice.horizon()];
    for &i in couplings {
        if i + 1 >= lattice.horizon() || !seen[i] || !seen[i + 1] {
            return Err(Error::InvalidArgument(format!("coupling {i} needs intervals {i} and {} confined", i + 1)));
        }
        if seen_c[i] {
            return Err(Error::InvalidArgument(format!("coupling {i} listed twice")));
        }
        seen_c[i] = true;
    }
    let n = lattice.steps();
    let mut p = DMatrix::identity(n, n) * lattice.steps_per_unit() as f64;
    if beta > 0.0 {
        let blocks = intervals
            .iter()
            .map(|&i| intra_block(lattice, i))
            .chain(couplings.iter().map(|&i| coupling_block(lattice, i)));
        for (off, block) in blocks {
            let mut view = p.view_mut((off, off), block.shape());
            view += block * (2.0 * beta);
        }
    }
    let label = format!("BM<beta={beta};I={intervals:?};S={couplings:?}>");
    GaussianMeasure::from_precision(lattice.clone(), p, label)
}

/// Block measure on `[a, b]`: every interval confined and every adjacent pair
/// inside the block coupled, all with the same `β`.
pub fn block_measure(lattice: &Lattice, beta: f64, a: usize, b: usize) -> Result<GaussianMeasure> {
    if a >= b || b > lattice.horizon() {
        return Err(Error::InvalidArgument(format!("block [{a}, {b}] invalid for T = {}", lattice.horizon())));
    }
    let intervals: Vec<usize> = (a..b).collect();
    let couplings: Vec<usize> = (a..b - 1).collect();
    confined_measure(lattice, beta, &intervals, &couplings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn linear_increments(l: &Lattice, slope: f64) -> Vec<f64> {
        vec![slope * l.eta(); l.steps()]
    }

    #[test]
    fn brownian_precision_is_diagonal() {
        let l = Lattice::new(1, 4, 3).unwrap();
        let mu = brownian(&l);
        assert_eq!(mu.precision(), &(DMatrix::identity(4, 4) * 4.0));
    }

    #[test]
    fn endpoint_second_moment_is_dt() {
        let l = Lattice::new(4, 8, 3).unwrap();
        let mu = brownian(&l);
        let end = LinearFunctional::point(&l, l.steps()).unwrap();
        assert_relative_eq!(mu.second_moment(&end).unwrap(), 12.0, epsilon = 1e-12);
        assert_eq!(mu.second_moment(&LinearFunctional::zero(&l)).unwrap(), 0.0);
    }

    #[test]
    fn intra_form_matches_expanded_square() {
        let l = Lattice::new(2, 8, 1).unwrap();
        let q = intra_interval_form(&l, 1).unwrap();
        let m = l.steps_per_unit() as f64;
        let eta = l.eta();
        // η²(2 M Σ_j b_j b_jᵀ - 2 s sᵀ) with b_j the point functionals.
        let pts: Vec<_> = l.grid(1).map(|j| LinearFunctional::point(&l, j).unwrap()).collect();
        let n = l.steps();
        let mut expect = DMatrix::zeros(n, n);
        let mut s = nalgebra::DVector::zeros(n);
        for p in &pts {
            let v = nalgebra::DVector::from_column_slice(p.coefficients());
            expect += &v * v.transpose() * (2.0 * m * eta * eta);
            s += v;
        }
        expect -= &s * s.transpose() * (2.0 * eta * eta);
        assert!((q.matrix() - expect).amax() < 1e-12);
    }

    #[test]
    fn constant_path_has_zero_forms() {
        let l = Lattice::new(3, 8, 2).unwrap();
        let zero = vec![0.0; l.steps() * 2];
        assert_eq!(intra_interval_form(&l, 2).unwrap().eval(&zero, 2), 0.0);
        assert_eq!(adjacent_coupling_form(&l, 1).unwrap().eval(&zero, 2), 0.0);
    }

    #[test]
    fn linear_path_intra_value_tends_to_one_sixth() {
        let l = Lattice::new(1, 256, 1).unwrap();
        let q = intra_interval_form(&l, 0).unwrap();
        let v = q.eval(&linear_increments(&l, 1.0), 1);
        assert!((v - 1.0 / 6.0).abs() < 2.0 * l.eta(), "{v}");
    }

    #[test]
    fn step_path_coupling_value_is_c_squared() {
        let l = Lattice::new(2, 128, 1).unwrap();
        let mut x = vec![0.0; l.steps()];
        // Jump of size c just before t = 1, so B ≡ 0 on the grid of [0,1) and ≡ c on [1,2).
        x[l.steps_per_unit() - 1] = 1.5;
        let v = adjacent_coupling_form(&l, 0).unwrap().eval(&x, 1);
        assert!((v - 2.25).abs() < 1e-12, "{v}");
    }

    #[test]
    fn averages_of_linear_path() {
        let l = Lattice::new(2, 64, 1).unwrap();
        let x = linear_increments(&l, 1.0);
        let a0 = LinearFunctional::interval_average(&l, 0).unwrap();
        let a1 = LinearFunctional::interval_average(&l, 1).unwrap();
        assert_relative_eq!(a0.apply(&x, 1, 0), 0.5, epsilon = 1e-12);
        assert_relative_eq!(a1.sub(&a0).unwrap().apply(&x, 1, 0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn average_variance_tends_to_one_third() {
        let l = Lattice::new(1, 128, 1).unwrap();
        let mu = brownian(&l);
        let a = LinearFunctional::interval_average(&l, 0).unwrap();
        assert!((mu.second_moment(&a).unwrap() - 1.0 / 3.0).abs() < l.eta());
    }

    #[test]
    fn zero_beta_is_brownian() {
        let l = Lattice::new(2, 8, 1).unwrap();
        let nu = confined_measure(&l, 0.0, &[0, 1], &[0]).unwrap();
        assert_eq!(nu.precision(), brownian(&l).precision());
    }

    #[test]
    fn invalid_coupling_rejected() {
        let l = Lattice::new(3, 4, 1).unwrap();
        assert!(confined_measure(&l, 1.0, &[0], &[0]).is_err());
        assert!(confined_measure(&l, -1.0, &[0], &[]).is_err());
        assert!(intra_interval_form(&l, 3).is_err());
        assert!(adjacent_coupling_form(&l, 2).is_err());
    }

    #[test]
    fn path_roundtrip() {
        let l = Lattice::new(1, 4, 2).unwrap();
        let x: Vec<f64> = (0..8).map(|i| i as f64 * 0.5 - 1.0).collect();
        assert_eq!(l.increments_from_path(&l.path_values(&x)), x);
    }
}
