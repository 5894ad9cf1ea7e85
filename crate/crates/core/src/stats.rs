//! Monte Carlo bookkeeping shared by every estimator in the crate.

use serde::{Deserialize, Serialize};

/// Number of batches used by every batch-means standard error.
pub const BATCHES: usize = 32;

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { mean: value, stderr: 0.0 }
    }

    /// `|self - value| <= k * stderr`, with exact equality accepted when stderr is zero.
    pub fn within(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.stderr + 1e-12 * value.abs().max(1.0)
    }
}

/// Batch-means estimate of the mean of a (possibly autocorrelated) series.
///
/// Falls back to the i.i.d. formula when the series is too short to fill
/// two points per batch.
pub fn batch_means(xs: &[f64], batches: usize) -> Estimate {
    let n = xs.len();
    if n == 0 {
        return Estimate { mean: f64::NAN, stderr: f64::NAN };
    }
    let mean = neumaier_sum(xs.iter().copied()) / n as f64;
    if n < 2 * batches || batches < 2 {
        if n < 2 {
            return Estimate { mean, stderr: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        return Estimate { mean, stderr: (var / n as f64).sqrt() };
    }
    let size = n / batches;
    // Trailing remainder goes into the last batch so every sample counts.
    let means: Vec<f64> = (0..batches)
        .map(|b| {
            let lo = b * size;
            let hi = if b + 1 == batches { n } else { lo + size };
            xs[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let bm = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - bm).powi(2)).sum::<f64>() / (batches - 1) as f64;
    Estimate { mean, stderr: (var / batches as f64).sqrt() }
}

/// Effective sample size implied by the batch-means standard error.
pub fn effective_sample_size(xs: &[f64], batches: usize) -> f64 {
    let n = xs.len();
    if n < 2 {
        return n as f64;
    }
    let est = batch_means(xs, batches);
    let var = xs.iter().map(|x| (x - est.mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if est.stderr == 0.0 {
        return if var == 0.0 { n as f64 } else { f64::INFINITY };
    }
    (var / (est.stderr * est.stderr)).min(n as f64 * 10.0)
}

/// Mean and standard error of i.i.d. replicate estimates.
pub fn replicate_estimate(replicates: &[f64]) -> Estimate {
    let r = replicates.len();
    let mean = replicates.iter().sum::<f64>() / r as f64;
    if r < 2 {
        return Estimate { mean, stderr: 0.0 };
    }
    let var = replicates.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
    Estimate { mean, stderr: (var / r as f64).sqrt() }
}

/// Compensated (Neumaier) summation.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for x in terms {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Inverse-variance pooling of independent estimates.
pub fn pool_inverse_variance(estimates: &[Estimate]) -> Estimate {
    if estimates.iter().any(|e| e.stderr == 0.0) {
        let exact: Vec<f64> = estimates.iter().filter(|e| e.stderr == 0.0).map(|e| e.mean).collect();
        return Estimate::exact(exact.iter().sum::<f64>() / exact.len() as f64);
    }
    let wsum: f64 = estimates.iter().map(|e| 1.0 / (e.stderr * e.stderr)).sum();
    let mean = estimates.iter().map(|e| e.mean / (e.stderr * e.stderr)).sum::<f64>() / wsum;
    Estimate { mean, stderr: (1.0 / wsum).sqrt() }
}

/// Least-squares line `y = slope·x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope (zero for two points).
    pub stderr: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> crate::Result<LinearFit> {
    use crate::Error;
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), found: ys.len() });
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("a line fit needs two points, got {n}")));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InsufficientData("all abscissae coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = if n > 2 {
        let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        (rss / (n - 2) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LinearFit { slope, intercept, stderr })
}

/// Derive an independent stream seed from a base seed and an index (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
