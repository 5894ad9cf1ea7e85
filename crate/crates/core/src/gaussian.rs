//! Centered Gaussian measures on increment coordinates.
//!
//! A measure is described by its per-coordinate precision matrix `P` (n×n);
//! the `d` spatial coordinates are i.i.d. copies. Points are stored flat with
//! layout `x[j * d + c]` for increment `j` and coordinate `c`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::body::ConvexBody;
use crate::error::{Error, Result};
use crate::lattice::{Lattice, LinearFunctional};
use crate::stats::{batch_means, Estimate, BATCHES};

const PSD_TOL: f64 = 1e-10;

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetric positive semidefinite form acting coordinatewise: `Q(x) = Σ_c x_cᵀ M x_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    matrix: DMatrix<f64>,
    shift_invariant: bool,
    label: String,
}

impl QuadraticForm {
    /// Checked constructor: symmetrizes and rejects matrices with a negative
    /// eigenvalue beyond `1e-10` of the largest one.
    pub fn new(matrix: DMatrix<f64>, shift_invariant: bool, label: impl Into<String>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch { expected: matrix.nrows(), found: matrix.ncols() });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite matrix entry".into()));
        }
        let matrix = symmetrize(&matrix);
        if matrix.nrows() > 0 {
            let eig = matrix.clone().symmetric_eigenvalues();
            let max = eig.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
            let min = eig.iter().fold(f64::INFINITY, |a, &b| a.min(b));
            if min < -PSD_TOL * max.max(f64::MIN_POSITIVE) {
                return Err(Error::NotPositiveSemidefinite { min_eigenvalue: min });
            }
        }
        Ok(Self { matrix, shift_invariant, label: label.into() })
    }

    /// For matrices that are Gram matrices by construction.
    pub(crate) fn from_gram(matrix: DMatrix<f64>, shift_invariant: bool, label: impl Into<String>) -> Self {
        Self { matrix: symmetrize(&matrix), shift_invariant, label: label.into() }
    }

    pub fn zeros(n: usize) -> Self {
        Self { matrix: DMatrix::zeros(n, n), shift_invariant: true, label: "0".into() }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn shift_invariant(&self) -> bool {
        self.shift_invariant
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            matrix: &self.matrix * c,
            shift_invariant: self.shift_invariant,
            label: format!("{c}*{}", self.label),
        }
    }

    pub fn add(&self, other: &QuadraticForm) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(Self {
            matrix: &self.matrix + &other.matrix,
            shift_invariant: self.shift_invariant && other.shift_invariant,
            label: format!("{}+{}", self.label, other.label),
        })
    }

    /// Value at a flat point with `coords` spatial coordinates.
    pub fn eval(&self, x: &[f64], coords: usize) -> f64 {
        let n = self.dim();
        (0..coords)
            .map(|c| {
                let v = DVector::from_iterator(n, (0..n).map(|j| x[j * coords + c]));
                v.dot(&(&self.matrix * &v))
            })
            .sum()
    }
}

/// Centered Gaussian measure with density `∝ exp(-½ Σ_c x_cᵀ P x_c)`.
#[derive(Debug, Clone)]
pub struct GaussianMeasure {
    lattice: Lattice,
    precision: DMatrix<f64>,
    /// Lower Cholesky factor of the precision.
    chol_l: DMatrix<f64>,
    label: String,
}

impl GaussianMeasure {
    pub fn from_precision(lattice: Lattice, precision: DMatrix<f64>, label: impl Into<String>) -> Result<Self> {
        let n = lattice.steps();
        if precision.nrows() != n || precision.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: precision.nrows() });
        }
        let precision = symmetrize(&precision);
        let chol = precision
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))?;
        let chol_l = chol.l();
        if chol_l.diagonal().iter().any(|&p| !(p > 0.0)) {
            return Err(Error::NotPositiveDefinite("non-positive Cholesky pivot".into()));
        }
        Ok(Self { lattice, precision, chol_l, label: label.into() })
    }

    /// General Gaussian on `R^{n×coords}` with per-coordinate precision `precision`.
    pub fn new(precision: DMatrix<f64>, coords: usize) -> Result<Self> {
        let lattice = Lattice::new(1, precision.nrows(), coords)?;
        Self::from_precision(lattice, precision, "gaussian")
    }

    /// Standard Gaussian on `R^dim`.
    pub fn standard(dim: usize) -> Result<Self> {
        Self::new(DMatrix::identity(1, 1), dim)
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Per-coordinate dimension n.
    pub fn dim(&self) -> usize {
        self.precision.nrows()
    }

    pub fn coords(&self) -> usize {
        self.lattice.dim()
    }

    /// Length of a flat point.
    pub fn flat_len(&self) -> usize {
        self.dim() * self.coords()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut inv_l = DMatrix::identity(n, n);
        self.chol_l.solve_lower_triangular_mut(&mut inv_l);
        inv_l.transpose() * inv_l
    }

    /// Per-coordinate variance `aᵀ P⁻¹ a` via one triangular solve.
    pub fn variance(&self, a: &[f64]) -> Result<f64> {
        if a.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: a.len() });
        }
        let mut y = DVector::from_column_slice(a);
        if !self.chol_l.solve_lower_triangular_mut(&mut y) {
            return Err(Error::NotPositiveDefinite("triangular solve failed".into()));
        }
        Ok(y.norm_squared())
    }

    /// Per-coordinate covariance `aᵀ P⁻¹ b`.
    pub fn covariance_of(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        let n = self.dim();
        if a.len() != n || b.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: a.len().min(b.len()) });
        }
        let mut ya = DVector::from_column_slice(a);
        let mut yb = DVector::from_column_slice(b);
        self.chol_l.solve_lower_triangular_mut(&mut ya);
        self.chol_l.solve_lower_triangular_mut(&mut yb);
        Ok(ya.dot(&yb))
    }

    /// `E‖a(B)‖² = d · aᵀ P⁻¹ a`, computed exactly.
    pub fn second_moment(&self, a: &LinearFunctional) -> Result<f64> {
        Ok(self.coords() as f64 * self.variance(a.coefficients())?)
    }

    /// Measure with density `∝ exp(-Q(x)) dμ(x)`: precision `P + 2M`.
    pub fn reweight_quadratic(&self, q: &QuadraticForm) -> Result<Self> {
        if q.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: q.dim() });
        }
        let precision = &self.precision + q.matrix() * 2.0;
        let label = format!("{}<{}>", self.label, q.label());
        Self::from_precision(self.lattice.clone(), precision, label)
    }

    /// Image of μ under `x ↦ 2x`.
    pub fn dilate2(&self) -> Self {
        Self {
            lattice: self.lattice.clone(),
            precision: &self.precision / 4.0,
            chol_l: &self.chol_l / 2.0,
            label: format!("{}x2", self.label),
        }
    }

    /// Map a flat standard-normal vector to a draw of μ (`x_c = L^{-T} z_c`).
    pub fn unwhiten(&self, z: &[f64]) -> Vec<f64> {
        let (n, d) = (self.dim(), self.coords());
        let mut out = vec![0.0; n * d];
        for c in 0..d {
            let mut v = DVector::from_iterator(n, (0..n).map(|j| z[j * d + c]));
            self.chol_l.tr_solve_lower_triangular_mut(&mut v);
            for j in 0..n {
                out[j * d + c] = v[j];
            }
        }
        out
    }

    /// Inverse of [`unwhiten`](Self::unwhiten): `z_c = Lᵀ x_c`.
    pub fn whiten(&self, x: &[f64]) -> Vec<f64> {
        let (n, d) = (self.dim(), self.coords());
        let lt = self.chol_l.transpose();
        let mut out = vec![0.0; n * d];
        for c in 0..d {
            let v = DVector::from_iterator(n, (0..n).map(|j| x[j * d + c]));
            let w = &lt * v;
            for j in 0..n {
                out[j * d + c] = w[j];
            }
        }
        out
    }

    /// One draw using the supplied generator.
    pub fn sample_with<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.flat_len()).map(|_| StandardNormal.sample(rng)).collect();
        self.unwhiten(&z)
    }

    /// `count` i.i.d. draws, deterministic in `seed`.
    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        if count == 0 {
            return Err(Error::InvalidArgument("sample count must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..count).map(|_| self.sample_with(&mut rng)).collect())
    }

    /// Monte Carlo estimate of `μ(K)`.
    pub fn convex_prob(&self, body: &ConvexBody, count: usize, seed: u64) -> Result<Estimate> {
        if count == 0 {
            return Err(Error::InvalidArgument("sample count must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hits: Vec<f64> = (0..count)
            .map(|_| if body.contains(&self.sample_with(&mut rng)) { 1.0 } else { 0.0 })
            .collect();
        Ok(batch_means(&hits, BATCHES))
    }
}
