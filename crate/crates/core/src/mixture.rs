//! Finite mixtures of densities relative to a shared base measure, with
//! Bayes-rule reweighting and coarsening.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type DensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A probability density with respect to the mixture's base measure.
#[derive(Clone)]
pub struct Component {
    pub id: String,
    density: DensityFn,
}

impl fmt::Debug for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Component").field("id", &self.id).finish_non_exhaustive()
    }
}

impl Component {
    pub fn new(id: impl Into<String>, density: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { id: id.into(), density: Arc::new(density) }
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        (self.density)(x)
    }
}

/// `ν = Σ_j p_j ν_j`.
#[derive(Debug, Clone)]
pub struct MixtureDecomposition {
    weights: Vec<f64>,
    components: Vec<Component>,
}

const WEIGHT_TOL: f64 = 1e-12;

impl MixtureDecomposition {
    pub fn new(weights: Vec<f64>, components: Vec<Component>) -> Result<Self> {
        if weights.len() != components.len() {
            return Err(Error::DimensionMismatch { expected: components.len(), found: weights.len() });
        }
        if weights.is_empty() {
            return Err(Error::InvalidArgument("mixture needs at least one component".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("mixture weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidArgument(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(Self { weights, components })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Mixture density `Σ_j p_j ρ_j(x)`.
    pub fn density(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(&self.components).map(|(p, c)| p * c.density(x)).sum()
    }

    /// Bayes-rule reweighting by a nonnegative `f`.
    ///
    /// `expectation(j, ν_j)` must return `E^{ν_j}[f]`. New weights are
    /// `q_j = p_j E_j[f] / Σ_k p_k E_k[f]` and components become `f ρ_j / E_j[f]`.
    pub fn reweight(&self, f: DensityFn, expectation: &dyn Fn(usize, &Component) -> f64) -> Result<Self> {
        let e: Vec<f64> = self.components.iter().enumerate().map(|(j, c)| expectation(j, c)).collect();
        if e.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument("component expectations must be finite and nonnegative".into()));
        }
        let total: f64 = self.weights.iter().zip(&e).map(|(p, v)| p * v).sum();
        if total <= 0.0 {
            return Err(Error::ZeroExpectation);
        }
        let weights: Vec<f64> = self.weights.iter().zip(&e).map(|(p, v)| p * v / total).collect();
        let components = self
            .components
            .iter()
            .zip(&e)
            .map(|(c, &ej)| {
                let inner = c.density.clone();
                let f = f.clone();
                let id = format!("{}<f>", c.id);
                if ej > 0.0 {
                    Component::new(id, move |x| f(x) * inner(x) / ej)
                } else {
                    Component::new(id, |_| 0.0)
                }
            })
            .collect();
        Ok(Self { weights, components })
    }

    /// Merge components along a partition of the index set.
    pub fn coarsen(&self, partition: &[Vec<usize>]) -> Result<Self> {
        let mut seen = vec![false; self.len()];
        for block in partition {
            if block.is_empty() {
                return Err(Error::InvalidPartition("empty block".into()));
            }
            for &j in block {
                if j >= self.len() {
                    return Err(Error::InvalidPartition(format!("index {j} out of range")));
                }
                if seen[j] {
                    return Err(Error::InvalidPartition(format!("index {j} appears twice")));
                }
                seen[j] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidPartition("partition does not cover every component".into()));
        }
        let mut weights = Vec::with_capacity(partition.len());
        let mut components = Vec::with_capacity(partition.len());
        for block in partition {
            let ps: f64 = block.iter().map(|&j| self.weights[j]).sum();
            let parts: Vec<(f64, DensityFn)> = block
                .iter()
                .map(|&j| (self.weights[j], self.components[j].density.clone()))
                .collect();
            let id = block.iter().map(|&j| self.components[j].id.as_str()).collect::<Vec<_>>().join("|");
            let comp = if ps > 0.0 {
                Component::new(id, move |x| parts.iter().map(|(p, d)| p * d(x)).sum::<f64>() / ps)
            } else {
                Component::new(id, |_| 0.0)
            };
            weights.push(ps);
            components.push(comp);
        }
        Ok(Self { weights, components })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss(var: f64) -> impl Fn(&[f64]) -> f64 + Send + Sync {
        move |x: &[f64]| (-x[0] * x[0] / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    }

    fn two_gaussians() -> MixtureDecomposition {
        MixtureDecomposition::new(
            vec![0.5, 0.5],
            vec![Component::new("a", gauss(1.0)), Component::new("b", gauss(4.0))],
        )
        .unwrap()
    }

    #[test]
    fn constant_weight_keeps_weights() {
        let m = two_gaussians();
        let r = m.reweight(Arc::new(|_| 1.0), &|_, _| 1.0).unwrap();
        assert_eq!(r.weights(), m.weights());
    }

    #[test]
    fn gaussian_weight_closed_form() {
        // E_{N(0,v)}[e^{-x²}] = 1/√(1+2v).
        let m = two_gaussians();
        let r = m.reweight(Arc::new(|x| (-x[0] * x[0]).exp()), &|j, _| {
            let v: f64 = [1.0, 4.0][j];
            1.0 / (1.0 + 2.0 * v).sqrt()
        });
        let r = r.unwrap();
        let (e1, e2) = (1.0 / 3f64.sqrt(), 1.0 / 3.0);
        assert!((r.weights()[0] - e1 / (e1 + e2)).abs() < 1e-15);
        assert!((r.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_zero_expectations_rejected() {
        let m = two_gaussians();
        assert!(matches!(m.reweight(Arc::new(|_| 0.0), &|_, _| 0.0), Err(Error::ZeroExpectation)));
    }

    #[test]
    fn partitions_validated() {
        let m = two_gaussians();
        assert!(m.coarsen(&[vec![0]]).is_err());
        assert!(m.coarsen(&[vec![0, 0], vec![1]]).is_err());
        assert!(m.coarsen(&[vec![0], vec![2]]).is_err());
        let all = m.coarsen(&[vec![0, 1]]).unwrap();
        assert_eq!(all.weights(), &[1.0]);
        let x = [0.3];
        assert!((all.density(&x) - m.density(&x)).abs() < 1e-15);
    }
}
