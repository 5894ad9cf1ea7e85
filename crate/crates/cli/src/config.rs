//! Experiment configuration: one flat table per subcommand plus a global seed.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralConfig {
    pub betas: Vec<f64>,
    pub steps_per_unit: usize,
    /// Compare every `stride`-th grid point.
    pub stride: usize,
    pub series_tol: f64,
    pub max_diff: f64,
    pub zero_beta_diff: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self { betas: vec![0.0, 2.0, 10.0, 100.0, 1000.0], steps_per_unit: 256, stride: 1, series_tol: 1e-9, max_diff: 5e-3, zero_beta_diff: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecursionConfig {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub alpha_count: usize,
    pub fit_min: f64,
    pub fit_max: f64,
    pub p_values: Vec<f64>,
    pub c_decomp: f64,
    pub c_unif: f64,
    pub c_p: f64,
    pub c_stop: f64,
    /// `alpha` or `beta`.
    pub log_factor: String,
    pub slope_tol: f64,
}

impl Default for RecursionConfig {
    fn default() -> Self {
        let c = polaron_lab::recursion::RecursionConstants::default();
        Self {
            alpha_min: 10.0,
            alpha_max: 1e6,
            alpha_count: 41,
            fit_min: 1e3,
            fit_max: 1e6,
            p_values: vec![0.5, 1.0, 1.5],
            c_decomp: c.c_decomp,
            c_unif: c.c_unif,
            c_p: c.c_p,
            c_stop: c.c_stop,
            log_factor: "alpha".into(),
            slope_tol: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    pub alphas: Vec<f64>,
    pub horizon: usize,
    pub steps_per_unit: usize,
    pub cutoff: f64,
    pub p: f64,
    pub steps: usize,
    pub chains: usize,
    pub rho: f64,
    pub bridge_fraction: f64,
    pub warmup_fraction: f64,
    pub radii: Vec<f64>,
    pub baseline_paths: usize,
    /// Required effective sample size for the free (`alpha = 0`) run.
    pub free_min_ess: f64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            alphas: vec![0.0, 0.5, 1.0, 2.0],
            horizon: 4,
            steps_per_unit: 32,
            cutoff: 50.0,
            p: 1.0,
            steps: 50_000,
            chains: 1,
            rho: 0.2,
            bridge_fraction: 0.5,
            warmup_fraction: 0.2,
            radii: vec![1.0, 2.0, 3.0, 4.0],
            baseline_paths: 50_000,
            free_min_ess: 1e3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GciConfig {
    pub cases: usize,
    pub points: usize,
    pub replicates: usize,
    pub max_dim: usize,
}

impl Default for GciConfig {
    fn default() -> Self {
        Self { cases: 1000, points: 1 << 20, replicates: 32, max_dim: 6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecomposeConfig {
    pub dims: Vec<usize>,
    /// `ball` or `box`, one per dimension.
    pub bodies: Vec<String>,
    /// Radius or half-width, one per dimension.
    pub sizes: Vec<f64>,
    pub max_delta: f64,
    pub c1: f64,
    pub negative_c1: f64,
    pub delta_samples: usize,
    pub good_samples: usize,
    pub segments: usize,
    pub concavity_tol: f64,
    /// Candidate constants for the smallest-passing-C1 report.
    pub c1_scan: Vec<f64>,
    pub scan_samples: usize,
    pub scan_segments: usize,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        Self {
            dims: vec![2, 3, 8],
            bodies: vec!["ball".into(), "box".into(), "ball".into()],
            sizes: vec![4.0, 3.7, 5.3],
            max_delta: 1e-3,
            c1: 2.0,
            negative_c1: 0.01,
            delta_samples: 100_000,
            good_samples: 100_000,
            segments: 1000,
            concavity_tol: 1e-6,
            c1_scan: vec![0.25, 0.5, 0.75, 1.0, 1.5, 2.0],
            scan_samples: 20_000,
            scan_segments: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub fourier_terms: usize,
    pub fourier_tol: f64,
    pub band_betas: Vec<f64>,
    pub band_points: usize,
    pub band_max_ratio: f64,
    pub scaling_steps_per_unit: usize,
    pub scaling_separations: Vec<usize>,
    pub scaling_betas: Vec<f64>,
    pub scaling_slope_tol: f64,
    /// Constant in the endpoint bound `c (s/β + β^{-1/2})`.
    pub endpoint_constant: f64,
    pub mixtures: usize,
    pub mixture_tol: f64,
    pub product_max_horizon: usize,
    pub product_alpha: f64,
    pub product_c1: f64,
    pub product_tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            fourier_terms: 1_000_000,
            fourier_tol: 2e-6,
            band_betas: (0..=10).map(|k| 10f64.powf(1.0 + 0.5 * k as f64)).collect(),
            band_points: 400,
            band_max_ratio: 4.0,
            scaling_steps_per_unit: 64,
            scaling_separations: vec![2, 4, 8, 16],
            scaling_betas: vec![1e2, 1e3, 1e4],
            scaling_slope_tol: 0.1,
            endpoint_constant: 2.0,
            mixtures: 100,
            mixture_tol: 1e-10,
            product_max_horizon: 6,
            product_alpha: 0.5,
            product_c1: 1.5,
            product_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub spectral: SpectralConfig,
    pub recursion: RecursionConfig,
    pub mcmc: McmcConfig,
    pub gci: GciConfig,
    pub decompose: DecomposeConfig,
    pub oracle: OracleConfig,
}

/// Manifest fields needed to replay a run.
#[derive(Deserialize)]
struct ManifestConfig {
    config: String,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).context("parsing config")
    }

    /// Read a TOML config, or the `config` field of a JSON run manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        if path.extension().is_some_and(|e| e == "json") {
            let m: ManifestConfig = serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
            return Self::from_toml(&m.config);
        }
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Apply `section.key=value` (or `seed=value`); the value is read as a TOML literal,
    /// falling back to a bare string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment.split_once('=').ok_or_else(|| anyhow!("override `{assignment}` is not key=value"))?;
        let key = key.trim();
        let value: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {}", raw.trim())) {
            Ok(mut t) => t.remove("v").expect("parsed key"),
            Err(_) => toml::Value::String(raw.trim().to_string()),
        };
        let mut root = toml::Value::try_from(&*self)?;
        let mut slot = &mut root;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let table = slot.as_table_mut().ok_or_else(|| anyhow!("`{key}` does not name a config field"))?;
            if !table.contains_key(*part) {
                bail!("unknown config key `{key}`");
            }
            if i + 1 == parts.len() {
                table.insert((*part).to_string(), value);
                break;
            }
            slot = table.get_mut(*part).expect("checked");
        }
        *self = root.try_into().with_context(|| format!("override `{assignment}`"))?;
        Ok(())
    }

    /// Check every numeric field against the owning module's preconditions.
    pub fn validate(&self) -> Result<()> {
        let s = &self.spectral;
        ensure_nonempty("spectral.betas", &s.betas)?;
        ensure(s.betas.iter().all(|b| b.is_finite() && *b >= 0.0), "spectral.betas must be finite and nonnegative")?;
        ensure(s.steps_per_unit >= 1 && s.stride >= 1, "spectral.steps_per_unit and stride must be positive")?;
        ensure(s.series_tol > 0.0 && s.max_diff > 0.0 && s.zero_beta_diff > 0.0, "spectral tolerances must be positive")?;

        let r = &self.recursion;
        ensure(r.alpha_count >= 2, "recursion.alpha_count must be at least 2")?;
        ensure(r.alpha_min >= 2.0 && r.alpha_max > r.alpha_min, "recursion needs 2 <= alpha_min < alpha_max")?;
        ensure(r.fit_min < r.fit_max, "recursion.fit_min must be below fit_max")?;
        ensure_nonempty("recursion.p_values", &r.p_values)?;
        ensure(r.p_values.iter().all(|p| *p > 0.0 && *p < 2.0), "recursion.p_values must lie in (0, 2)")?;
        self.recursion_constants()?.validate()?;

        let m = &self.mcmc;
        ensure_nonempty("mcmc.alphas", &m.alphas)?;
        ensure(m.alphas.iter().all(|a| a.is_finite() && *a >= 0.0), "mcmc.alphas must be finite and nonnegative")?;
        ensure(m.horizon >= 1 && m.steps_per_unit >= 1, "mcmc.horizon and steps_per_unit must be positive")?;
        ensure(m.cutoff > 0.0 && m.p > 0.0 && m.p < 2.0, "mcmc needs cutoff > 0 and p in (0, 2)")?;
        ensure(m.steps >= 10_000, "mcmc.steps must be at least 10^4")?;
        ensure(m.chains >= 1, "mcmc.chains must be positive")?;
        ensure(m.rho > 0.0 && m.rho <= 1.0, "mcmc.rho must lie in (0, 1]")?;
        ensure((0.0..=1.0).contains(&m.bridge_fraction), "mcmc.bridge_fraction must lie in [0, 1]")?;
        ensure(m.warmup_fraction > 0.0 && m.warmup_fraction < 1.0, "mcmc.warmup_fraction must lie in (0, 1)")?;
        ensure(m.radii.iter().all(|r| *r > 0.0) && m.baseline_paths > 0, "mcmc.radii must be positive")?;

        let g = &self.gci;
        ensure(g.cases >= 1 && g.max_dim >= 2 && g.max_dim <= 6, "gci needs cases >= 1 and 2 <= max_dim <= 6")?;
        ensure(g.replicates >= 2 && g.points >= 2 * g.replicates, "gci.points must cover at least two points per replicate")?;

        let d = &self.decompose;
        ensure_nonempty("decompose.dims", &d.dims)?;
        ensure(d.dims.len() == d.bodies.len() && d.dims.len() == d.sizes.len(), "decompose.dims, bodies and sizes must have equal length")?;
        ensure(d.bodies.iter().all(|b| b == "ball" || b == "box"), "decompose.bodies entries must be `ball` or `box`")?;
        ensure(d.dims.iter().all(|n| *n >= 1) && d.sizes.iter().all(|s| *s > 0.0), "decompose dims and sizes must be positive")?;
        ensure(d.c1 > 0.0 && d.negative_c1 > 0.0 && d.c1_scan.iter().all(|c| *c > 0.0), "decompose constants must be positive")?;
        ensure(d.delta_samples > 0 && d.good_samples > 0 && d.segments > 0, "decompose sample counts must be positive")?;
        ensure(d.scan_samples > 0 && d.scan_segments > 0, "decompose scan counts must be positive")?;

        let o = &self.oracle;
        ensure(o.fourier_terms >= 1 && o.band_points >= 2, "oracle term and point counts must be positive")?;
        ensure(o.band_betas.len() >= 2 && o.band_betas.iter().all(|b| *b > 0.0), "oracle.band_betas needs two positive values")?;
        ensure(o.scaling_separations.len() >= 3 && o.scaling_separations.iter().all(|s| *s >= 2), "oracle.scaling_separations needs three values >= 2")?;
        ensure(o.scaling_betas.len() >= 2 && o.scaling_betas.iter().all(|b| *b > 0.0), "oracle.scaling_betas needs two positive values")?;
        ensure(o.scaling_steps_per_unit >= 1, "oracle.scaling_steps_per_unit must be positive")?;
        ensure(o.product_max_horizon >= 1 && o.product_max_horizon <= polaron_lab::product::MAX_HORIZON, "oracle.product_max_horizon out of range")?;
        Ok(())
    }

    pub fn recursion_constants(&self) -> Result<polaron_lab::recursion::RecursionConstants> {
        use polaron_lab::recursion::{LogFactor, RecursionConstants};
        let r = &self.recursion;
        let log_factor = match r.log_factor.as_str() {
            "alpha" => LogFactor::Alpha,
            "beta" => LogFactor::Beta,
            other => bail!("recursion.log_factor must be `alpha` or `beta`, got `{other}`"),
        };
        Ok(RecursionConstants { c_decomp: r.c_decomp, c_unif: r.c_unif, c_p: r.c_p, c_stop: r.c_stop, log_factor })
    }
}

fn ensure(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(anyhow!("{msg}"))
    }
}

fn ensure_nonempty<T>(name: &str, v: &[T]) -> Result<()> {
    ensure(!v.is_empty(), &format!("{name} must not be empty"))
}
