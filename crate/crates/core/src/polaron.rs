//! Discretized, cut-off polaron path measure and a Metropolis sampler for it.
//!
//! The target has density `∝ exp(α E(B))` against lattice Brownian motion, with
//! `E(B) = η² Σ_{j,l} κ(t_j, t_l) V_A(‖B_{t_j} - B_{t_l}‖)` over the half-open
//! grid of `[0, T)`, diagonal included. Weights are only ever handled in the
//! log domain.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::stats::{batch_means, derive_seed, effective_sample_size, pool_inverse_variance, Estimate, BATCHES};

/// Cut-off potential. For `p = 1` this is the tangent-line cutoff
/// `2A - A²r` on `[0, 1/A]` and `1/r` beyond; otherwise `min(A, r^{-p})`.
pub fn potential_va(r: f64, cutoff: f64, p: f64) -> f64 {
    if p == 1.0 {
        if r * cutoff <= 1.0 {
            2.0 * cutoff - cutoff * cutoff * r
        } else {
            1.0 / r
        }
    } else {
        cutoff.min(r.powf(-p))
    }
}

pub type KernelFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone, Default)]
pub enum Kernel {
    /// `e^{-|t-s|}`.
    #[default]
    Exponential,
    Custom(KernelFn),
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Exponential => write!(f, "Exponential"),
            Kernel::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl Kernel {
    pub fn eval(&self, t: f64, s: f64) -> f64 {
        match self {
            Kernel::Exponential => (-(t - s).abs()).exp(),
            Kernel::Custom(k) => k(t, s),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PolaronConfig {
    pub alpha: f64,
    pub lattice: Lattice,
    pub cutoff: f64,
    pub p: f64,
    pub kernel: Kernel,
}

impl PolaronConfig {
    pub fn new(alpha: f64, horizon: usize, eta: f64, cutoff: f64) -> Result<Self> {
        let cfg = Self { alpha, lattice: Lattice::from_eta(horizon, eta, 3)?, cutoff, p: 1.0, kernel: Kernel::Exponential };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidArgument(format!("alpha must be finite and nonnegative, got {}", self.alpha)));
        }
        if !(self.cutoff > 0.0) || !self.cutoff.is_finite() {
            return Err(Error::InvalidArgument(format!("cutoff A must be positive, got {}", self.cutoff)));
        }
        if !(self.p > 0.0 && self.p < 2.0) {
            return Err(Error::InvalidArgument(format!("p must lie in (0, 2), got {}", self.p)));
        }
        Ok(())
    }

    /// `κ(t_j, t_l)` on the half-open grid of `[0, T)`.
    fn kernel_matrix(&self) -> Vec<f64> {
        let n = self.lattice.steps();
        let mut k = vec![0.0; n * n];
        for j in 0..n {
            for l in 0..n {
                k[j * n + l] = self.kernel.eval(self.lattice.time(j), self.lattice.time(l));
            }
        }
        k
    }
}

fn dist(values: &[f64], j: usize, l: usize, d: usize) -> f64 {
    (0..d).map(|c| (values[j * d + c] - values[l * d + c]).powi(2)).sum::<f64>().sqrt()
}

/// Energy from path values (`n + 1` points) and a precomputed kernel matrix.
fn energy_from_values(cfg: &PolaronConfig, kmat: &[f64], values: &[f64]) -> f64 {
    let n = cfg.lattice.steps();
    let d = cfg.lattice.dim();
    let eta = cfg.lattice.eta();
    let v0 = potential_va(0.0, cfg.cutoff, cfg.p);
    let mut diag = 0.0;
    let mut off = 0.0;
    for j in 0..n {
        diag += kmat[j * n + j] * v0;
        for l in j + 1..n {
            off += kmat[j * n + l] * potential_va(dist(values, j, l, d), cfg.cutoff, cfg.p);
        }
    }
    eta * eta * (diag + 2.0 * off)
}

/// `η² Σ_{j,l} κ(t_j,t_l) V_A(‖B_j - B_l‖)` for a flat increment vector.
pub fn interaction_energy(increments: &[f64], cfg: &PolaronConfig) -> Result<f64> {
    let expected = cfg.lattice.steps() * cfg.lattice.dim();
    if increments.len() != expected {
        return Err(Error::DimensionMismatch { expected, found: increments.len() });
    }
    let e = energy_from_values(cfg, &cfg.kernel_matrix(), &cfg.lattice.path_values(increments));
    if !e.is_finite() {
        return Err(Error::NonFiniteEnergy(e));
    }
    Ok(e)
}

/// Part of the energy sum touching the points in `set` (off-diagonal only).
fn partial_energy(cfg: &PolaronConfig, kmat: &[f64], values: &[f64], set: std::ops::Range<usize>) -> f64 {
    let n = cfg.lattice.steps();
    let d = cfg.lattice.dim();
    let mut s = 0.0;
    for j in set.clone() {
        for l in 0..n {
            if l == j || (set.contains(&l) && l < j) {
                continue;
            }
            s += kmat[j * n + l] * potential_va(dist(values, j, l, d), cfg.cutoff, cfg.p);
        }
    }
    2.0 * cfg.lattice.eta().powi(2) * s
}

/// Largest `‖B_t - B_s‖` over the closed interval `[i, i+1]`.
pub fn interval_oscillation(values: &[f64], lattice: &Lattice, i: usize) -> f64 {
    let m = lattice.steps_per_unit();
    let d = lattice.dim();
    let mut best = 0.0_f64;
    for j in i * m..=(i + 1) * m {
        for l in j + 1..=(i + 1) * m {
            best = best.max(dist(values, j, l, d));
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    /// pCN mixing for the global move, in `(0, 1]`.
    pub rho: f64,
    /// Probability that a step is a bridge refresh of one interval.
    pub bridge_fraction: f64,
    /// Fraction of steps used for adaptation and discarded.
    pub warmup_fraction: f64,
    /// Keep every `thin`-th post-warmup path (0 keeps none).
    pub thin: usize,
}

impl Default for Proposal {
    fn default() -> Self {
        Self { rho: 0.2, bridge_fraction: 0.5, warmup_fraction: 0.2, thin: 0 }
    }
}

/// Minimum effective sample size for an estimate to be reported.
pub const MIN_ESS: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McmcEstimate {
    /// Estimate of `E‖B_T‖²`.
    pub mean: f64,
    pub stderr: f64,
    pub ess: f64,
    pub accept_rate: f64,
    pub steps: usize,
    pub seed: u64,
}

impl McmcEstimate {
    /// `σ² = E‖B_T‖²/(dT)`.
    pub fn sigma2(&self, lattice: &Lattice) -> Estimate {
        let s = (lattice.dim() * lattice.horizon()) as f64;
        Estimate { mean: self.mean / s, stderr: self.stderr / s }
    }

    /// The estimate, or an error when the effective sample size is below [`MIN_ESS`].
    pub fn checked(&self) -> Result<Estimate> {
        if self.ess < MIN_ESS {
            return Err(Error::InsufficientData(format!("effective sample size {:.1} below {MIN_ESS}", self.ess)));
        }
        Ok(Estimate { mean: self.mean, stderr: self.stderr })
    }
}

/// Post-warmup record of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub energy: Vec<f64>,
    pub end_sq: Vec<f64>,
    /// Per step, the oscillation of each unit interval.
    pub oscillations: Vec<Vec<f64>>,
    /// Thinned increment vectors.
    pub paths: Vec<Vec<f64>>,
    pub accept_global: f64,
    pub accept_bridge: f64,
    pub rho: f64,
    pub rho_bridge: f64,
    pub seed: u64,
}

impl ChainOutput {
    pub fn estimate(&self) -> McmcEstimate {
        let e = batch_means(&self.end_sq, BATCHES);
        let total = self.accept_global + self.accept_bridge;
        McmcEstimate {
            mean: e.mean,
            stderr: e.stderr,
            ess: effective_sample_size(&self.end_sq, BATCHES),
            accept_rate: total.min(1.0),
            steps: self.end_sq.len(),
            seed: self.seed,
        }
    }

    /// Post-warmup mean of `‖B_t‖²` is only tracked at `t = T`; other times
    /// need stored paths.
    pub fn point_second_moment(&self, lattice: &Lattice, j: usize) -> Result<Estimate> {
        if self.paths.is_empty() {
            return Err(Error::EmptyChain);
        }
        let d = lattice.dim();
        let v: Vec<f64> = self
            .paths
            .iter()
            .map(|x| {
                let vals = lattice.path_values(x);
                (0..d).map(|c| vals[j * d + c].powi(2)).sum()
            })
            .collect();
        Ok(batch_means(&v, BATCHES))
    }
}

struct Adapter {
    rho: f64,
    tries: usize,
    accepts: usize,
}

impl Adapter {
    fn new(rho: f64) -> Self {
        Self { rho, tries: 0, accepts: 0 }
    }

    fn record(&mut self, accepted: bool) {
        self.tries += 1;
        self.accepts += accepted as usize;
        if self.tries == 100 {
            let rate = self.accepts as f64 / self.tries as f64;
            if rate < 0.25 {
                self.rho *= 0.8;
            } else if rate > 0.40 {
                self.rho = (self.rho * 1.25).min(1.0);
            }
            self.tries = 0;
            self.accepts = 0;
        }
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// One Metropolis chain.
pub fn mcmc_chain(cfg: &PolaronConfig, steps: usize, seed: u64, proposal: &Proposal) -> Result<ChainOutput> {
    cfg.validate()?;
    if steps < 10_000 {
        return Err(Error::InvalidArgument(format!("need at least 10^4 steps, got {steps}")));
    }
    if !(proposal.rho > 0.0 && proposal.rho <= 1.0) || !(0.0..=1.0).contains(&proposal.bridge_fraction) {
        return Err(Error::InvalidArgument("rho must lie in (0, 1] and bridge_fraction in [0, 1]".into()));
    }
    let lat = &cfg.lattice;
    let (n, d, m, t) = (lat.steps(), lat.dim(), lat.steps_per_unit(), lat.horizon());
    let sd = lat.eta().sqrt();
    let kmat = cfg.kernel_matrix();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut x: Vec<f64> = (0..n * d).map(|_| sd * normal(&mut rng)).collect();
    let mut values = lat.path_values(&x);
    let mut energy = energy_from_values(cfg, &kmat, &values);
    if !energy.is_finite() {
        return Err(Error::NonFiniteEnergy(energy));
    }

    let warmup = (steps as f64 * proposal.warmup_fraction).round() as usize;
    let mut global = Adapter::new(proposal.rho);
    let mut bridge = Adapter::new(proposal.rho);
    let (mut warm_accepts, mut g_tries, mut g_acc, mut b_tries, mut b_acc) = (0usize, 0usize, 0usize, 0usize, 0usize);
    let mut out = ChainOutput {
        energy: Vec::with_capacity(steps - warmup),
        end_sq: Vec::with_capacity(steps - warmup),
        oscillations: Vec::with_capacity(steps - warmup),
        paths: Vec::new(),
        accept_global: 0.0,
        accept_bridge: 0.0,
        rho: proposal.rho,
        rho_bridge: proposal.rho,
        seed,
    };
    let mut proposal_x = vec![0.0; n * d];
    let mut bridge_noise = vec![0.0; (m + 1) * d];

    for step in 0..steps {
        let adapting = step < warmup;
        let accepted;
        let is_bridge = m > 1 && rng.random::<f64>() < proposal.bridge_fraction;
        if !is_bridge {
            let rho = global.rho;
            let keep = (1.0 - rho * rho).sqrt();
            for (p, xi) in proposal_x.iter_mut().zip(&x) {
                *p = keep * xi + rho * sd * normal(&mut rng);
            }
            let new_values = lat.path_values(&proposal_x);
            let new_energy = energy_from_values(cfg, &kmat, &new_values);
            if !new_energy.is_finite() {
                return Err(Error::NonFiniteEnergy(new_energy));
            }
            accepted = rng.random::<f64>().ln() < cfg.alpha * (new_energy - energy);
            if accepted {
                std::mem::swap(&mut x, &mut proposal_x);
                values = new_values;
                energy = new_energy;
            }
            if adapting {
                global.record(accepted);
            } else {
                g_tries += 1;
                g_acc += accepted as usize;
            }
        } else {
            let i = rng.random_range(0..t);
            let rho = bridge.rho;
            let keep = (1.0 - rho * rho).sqrt();
            let (a, b) = (i * m, (i + 1) * m);
            // Fresh bridge fluctuation pinned at both ends.
            bridge_noise[..d].fill(0.0);
            for k in 1..=m {
                for c in 0..d {
                    bridge_noise[k * d + c] = bridge_noise[(k - 1) * d + c] + sd * normal(&mut rng);
                }
            }
            for k in 1..=m {
                let s = k as f64 / m as f64;
                for c in 0..d {
                    bridge_noise[k * d + c] -= s * bridge_noise[m * d + c];
                }
            }
            let interior = a + 1..b;
            let old_part = partial_energy(cfg, &kmat, &values, interior.clone());
            let mut new_values = values.clone();
            for k in 1..m {
                let s = k as f64 / m as f64;
                for c in 0..d {
                    let base = (1.0 - s) * values[a * d + c] + s * values[b * d + c];
                    let dev = values[(a + k) * d + c] - base;
                    new_values[(a + k) * d + c] = base + keep * dev + rho * bridge_noise[k * d + c];
                }
            }
            let new_part = partial_energy(cfg, &kmat, &new_values, interior);
            let new_energy = energy - old_part + new_part;
            if !new_energy.is_finite() {
                return Err(Error::NonFiniteEnergy(new_energy));
            }
            accepted = rng.random::<f64>().ln() < cfg.alpha * (new_part - old_part);
            if accepted {
                values = new_values;
                energy = new_energy;
                for k in a..b {
                    for c in 0..d {
                        x[k * d + c] = values[(k + 1) * d + c] - values[k * d + c];
                    }
                }
            }
            if adapting {
                bridge.record(accepted);
            } else {
                b_tries += 1;
                b_acc += accepted as usize;
            }
        }
        if adapting {
            warm_accepts += accepted as usize;
            if step + 1 == warmup && warm_accepts == 0 {
                return Err(Error::ZeroAcceptance);
            }
            continue;
        }
        out.energy.push(energy);
        out.end_sq.push((0..d).map(|c| values[n * d + c].powi(2)).sum());
        out.oscillations.push((0..t).map(|i| interval_oscillation(&values, lat, i)).collect());
        if proposal.thin > 0 && (step - warmup) % proposal.thin == 0 {
            out.paths.push(x.clone());
        }
    }
    if g_acc + b_acc == 0 {
        return Err(Error::ZeroAcceptance);
    }
    let total = (g_tries + b_tries) as f64;
    out.accept_global = g_acc as f64 / total;
    out.accept_bridge = b_acc as f64 / total;
    out.rho = global.rho;
    out.rho_bridge = bridge.rho;
    Ok(out)
}

/// Single-chain estimate of `E‖B_T‖²`.
pub fn mcmc_run(cfg: &PolaronConfig, steps: usize, seed: u64, proposal: &Proposal) -> Result<McmcEstimate> {
    Ok(mcmc_chain(cfg, steps, seed, proposal)?.estimate())
}

/// Independent chains with seeds derived from `seed`, pooled by inverse variance.
pub fn mcmc_pooled(
    cfg: &PolaronConfig,
    steps: usize,
    seed: u64,
    proposal: &Proposal,
    chains: usize,
) -> Result<(McmcEstimate, Vec<ChainOutput>)> {
    use rayon::prelude::*;
    if chains == 0 {
        return Err(Error::InvalidArgument("need at least one chain".into()));
    }
    let outputs: Vec<ChainOutput> = (0..chains as u64)
        .into_par_iter()
        .map(|c| mcmc_chain(cfg, steps, derive_seed(seed, c), proposal))
        .collect::<Result<_>>()?;
    let ests: Vec<McmcEstimate> = outputs.iter().map(ChainOutput::estimate).collect();
    let pooled = pool_inverse_variance(&ests.iter().map(|e| Estimate { mean: e.mean, stderr: e.stderr }).collect::<Vec<_>>());
    let est = McmcEstimate {
        mean: pooled.mean,
        stderr: pooled.stderr,
        ess: ests.iter().map(|e| e.ess).sum(),
        accept_rate: ests.iter().map(|e| e.accept_rate).sum::<f64>() / chains as f64,
        steps: ests.iter().map(|e| e.steps).sum(),
        seed,
    };
    Ok((est, outputs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillationRow {
    pub interval: usize,
    pub radius: f64,
    pub frequency: Estimate,
}

/// Empirical `P[sup_{s,t∈[i,i+1]} ‖B_t - B_s‖ ≤ R]` per interval and radius.
pub fn oscillation_stats(chains: &[ChainOutput], radii: &[f64]) -> Result<Vec<OscillationRow>> {
    let intervals = chains.iter().find_map(|c| c.oscillations.first()).map(Vec::len).ok_or(Error::EmptyChain)?;
    let mut rows = Vec::with_capacity(intervals * radii.len());
    for i in 0..intervals {
        for &r in radii {
            let ests: Vec<Estimate> = chains
                .iter()
                .filter(|c| !c.oscillations.is_empty())
                .map(|c| {
                    let hits: Vec<f64> = c.oscillations.iter().map(|o| if o[i] <= r { 1.0 } else { 0.0 }).collect();
                    batch_means(&hits, BATCHES)
                })
                .collect();
            let frequency = if ests.iter().all(|e| e.stderr == 0.0) {
                Estimate::exact(ests.iter().map(|e| e.mean).sum::<f64>() / ests.len() as f64)
            } else {
                pool_inverse_variance(&ests.iter().copied().filter(|e| e.stderr > 0.0).collect::<Vec<_>>())
            };
            rows.push(OscillationRow { interval: i, radius: r, frequency });
        }
    }
    Ok(rows)
}

/// Same table for exact Brownian draws on the lattice.
pub fn brownian_oscillation_baseline(lattice: &Lattice, radii: &[f64], count: usize, seed: u64) -> Result<Vec<OscillationRow>> {
    if count == 0 {
        return Err(Error::EmptyChain);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = lattice.eta().sqrt();
    let n = lattice.steps() * lattice.dim();
    let osc: Vec<Vec<f64>> = (0..count)
        .map(|_| {
            let x: Vec<f64> = (0..n).map(|_| sd * normal(&mut rng)).collect();
            let v = lattice.path_values(&x);
            (0..lattice.horizon()).map(|i| interval_oscillation(&v, lattice, i)).collect()
        })
        .collect();
    let pseudo = ChainOutput {
        energy: Vec::new(),
        end_sq: Vec::new(),
        oscillations: osc,
        paths: Vec::new(),
        accept_global: 1.0,
        accept_bridge: 0.0,
        rho: 1.0,
        rho_bridge: 1.0,
        seed,
    };
    oscillation_stats(std::slice::from_ref(&pseudo), radii)
}
