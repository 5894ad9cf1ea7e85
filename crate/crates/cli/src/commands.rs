//! Subcommand bodies. Each returns a [`Report`] of artifacts and checks and
//! leaves file handling to the caller.

use std::sync::Arc;

use anyhow::{anyhow, Result};
use nalgebra::DMatrix;
use polaron_lab::decomposition::{decompose, logconcavity_check, SigmaProfile};
use polaron_lab::gci::{gci_functional_test_with, gci_pair_test_with, GciReport, Verdict, ROUNDOFF, TIE_BAND};
use polaron_lab::lattice::{block_measure, confined_measure};
use polaron_lab::mixture::{Component, MixtureDecomposition};
use polaron_lab::polaron::{brownian_oscillation_baseline, mcmc_pooled, oscillation_stats, PolaronConfig, Proposal};
use polaron_lab::product::{product_reweight_check, ProductSetup};
use polaron_lab::qmc::NormalPoints;
use polaron_lab::recursion::{fixed_point_check, recursion_run};
use polaron_lab::spectral::{fourier_identity_check, scaled_sup_variance, variance_series};
use polaron_lab::stats::derive_seed;
use polaron_lab::{ConvexBody, GaussianMeasure, Lattice, LinearFunctional};
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::config::ExperimentConfig;
use crate::fit_loglog;
use crate::output::{Cell, Report, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Spectral,
    Recursion,
    Mcmc,
    Gci,
    Decompose,
    OracleCheck,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Spectral => "spectral",
            Command::Recursion => "recursion",
            Command::Mcmc => "mcmc",
            Command::Gci => "gci",
            Command::Decompose => "decompose",
            Command::OracleCheck => "oracle-check",
        }
    }
}

pub fn run(cmd: Command, cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    match cmd {
        Command::Spectral => spectral(cfg),
        Command::Recursion => recursion(cfg),
        Command::Mcmc => mcmc(cfg),
        Command::Gci => gci(cfg),
        Command::Decompose => decomposition(cfg),
        Command::OracleCheck => oracle(cfg),
    }
}

fn max_of(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

fn band_ratio(xs: &[f64]) -> f64 {
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    max_of(xs.iter().copied()) / lo
}

pub fn spectral(cfg: &ExperimentConfig) -> Result<Report> {
    let s = &cfg.spectral;
    let m = s.steps_per_unit;
    let lattice = Lattice::new(1, m, 1)?;
    let blocks: Vec<Vec<[f64; 5]>> = s
        .betas
        .par_iter()
        .map(|&beta| -> Result<Vec<[f64; 5]>> {
            let mu = confined_measure(&lattice, beta, &[0], &[])?;
            (0..=m)
                .step_by(s.stride)
                .map(|j| {
                    let t = lattice.time(j);
                    let series = variance_series(beta, t, s.series_tol)?;
                    let matrix = mu.variance(LinearFunctional::point(&lattice, j)?.coefficients())?;
                    Ok([beta, t, series, matrix, (series - matrix).abs()])
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut table = Table::new(&["beta", "t", "series", "matrix", "absdiff"]);
    let mut report = Report::default();
    for (beta, rows) in s.betas.iter().zip(&blocks) {
        for r in rows {
            table.push(r.iter().map(|&v| Cell::from(v)).collect());
        }
        let worst = max_of(rows.iter().map(|r| r[4]));
        let tol = if *beta == 0.0 { s.zero_beta_diff } else { s.max_diff };
        report.check(format!("spectral beta={beta}"), worst <= tol, format!("max |series - matrix| = {worst:.3e} (tol {tol:.1e})"));
    }
    report.table("spectral.csv", &table);
    Ok(report)
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp()).collect()
}

pub fn recursion(cfg: &ExperimentConfig) -> Result<Report> {
    let r = &cfg.recursion;
    let constants = cfg.recursion_constants()?;
    let alphas = log_grid(r.alpha_min, r.alpha_max, r.alpha_count);
    let mut table = Table::new(&["p", "alpha", "steps", "budget", "beta_l", "r_l", "corrected_log_beta", "beta_ratio"]);
    let mut report = Report::default();
    let mut fits = Vec::new();
    for &p in &r.p_values {
        let correction = (4.0 + 2.0 * p) / (2.0 - p);
        let mut fit_x = Vec::new();
        let mut fit_y = Vec::new();
        let mut ratios = Vec::new();
        let mut over_budget = 0;
        for &alpha in &alphas {
            let t = recursion_run(alpha, p, &constants)?;
            let ratio = fixed_point_check(&t)?.beta_ratio;
            let corrected = t.beta_l.ln() + correction * alpha.ln().ln();
            table.push(vec![
                p.into(),
                alpha.into(),
                t.stop_index.into(),
                t.step_budget.into(),
                t.beta_l.into(),
                t.r_l.into(),
                corrected.into(),
                ratio.into(),
            ]);
            over_budget += usize::from(!t.within_step_budget());
            ratios.push(ratio);
            if alpha >= r.fit_min * (1.0 - 1e-12) && alpha <= r.fit_max * (1.0 + 1e-12) {
                fit_x.push(alpha);
                fit_y.push(t.beta_l * alpha.ln().powf(correction));
            }
        }
        let fit = fit_loglog(&fit_x, &fit_y)?;
        let target = 4.0 / (2.0 - p);
        report.check(
            format!("recursion slope p={p}"),
            (fit.slope - target).abs() <= r.slope_tol,
            format!("slope {:.4} vs {target:.4} (tol {})", fit.slope, r.slope_tol),
        );
        report.check(format!("recursion step budget p={p}"), over_budget == 0, format!("{over_budget} grid points exceed c_stop log alpha"));
        fits.push(json!({
            "p": p,
            "slope": fit.slope,
            "slope_stderr": fit.stderr,
            "intercept": fit.intercept,
            "target": target,
            "fit_points": fit_x.len(),
            "beta_ratio_band": band_ratio(&ratios),
        }));
    }
    report.table("recursion.csv", &table);
    report.json("recursion.json", &json!({ "constants": constants, "fits": fits }));
    Ok(report)
}

pub fn mcmc(cfg: &ExperimentConfig) -> Result<Report> {
    let m = &cfg.mcmc;
    let lattice = Lattice::new(m.horizon, m.steps_per_unit, 3)?;
    let proposal = Proposal { rho: m.rho, bridge_fraction: m.bridge_fraction, warmup_fraction: m.warmup_fraction, thin: 0 };
    let free_mean = (lattice.dim() * lattice.horizon()) as f64;
    let baseline = brownian_oscillation_baseline(&lattice, &m.radii, m.baseline_paths, derive_seed(cfg.seed, 1_000_000))?;

    let mut table = Table::new(&["alpha", "mean_end_sq", "stderr", "sigma2", "sigma2_stderr", "ess", "accept_rate", "steps"]);
    let mut osc = Table::new(&["alpha", "interval", "radius", "frequency", "stderr", "baseline", "baseline_stderr"]);
    let mut report = Report::default();
    let mut means = Vec::new();
    for (k, &alpha) in m.alphas.iter().enumerate() {
        let pc = PolaronConfig { alpha, lattice: lattice.clone(), cutoff: m.cutoff, p: m.p, kernel: Default::default() };
        let (est, chains) = mcmc_pooled(&pc, m.steps, derive_seed(cfg.seed, k as u64), &proposal, m.chains)?;
        let sigma2 = est.sigma2(&lattice);
        table.push(vec![
            alpha.into(),
            est.mean.into(),
            est.stderr.into(),
            sigma2.mean.into(),
            sigma2.stderr.into(),
            est.ess.into(),
            est.accept_rate.into(),
            est.steps.into(),
        ]);
        let checked = est.checked();
        report.check(
            format!("mcmc ess alpha={alpha}"),
            checked.is_ok(),
            format!("ess {:.0}, accept {:.3}", est.ess, est.accept_rate),
        );
        if alpha == 0.0 {
            let ok = (est.mean - free_mean).abs() <= 3.0 * est.stderr && est.ess >= m.free_min_ess;
            report.check(
                "mcmc free endpoint",
                ok,
                format!("E|B_T|^2 = {:.4} +- {:.4} vs {free_mean}, ess {:.0} (need {})", est.mean, est.stderr, est.ess, m.free_min_ess),
            );
        } else {
            report.check(
                format!("mcmc domination alpha={alpha}"),
                est.mean <= free_mean + 3.0 * est.stderr,
                format!("E|B_T|^2 = {:.4} +- {:.4} vs {free_mean}", est.mean, est.stderr),
            );
        }
        means.push((alpha, est.mean, est.stderr));

        let rows = oscillation_stats(&chains, &m.radii)?;
        let mut worst = f64::INFINITY;
        for (row, base) in rows.iter().zip(&baseline) {
            osc.push(vec![
                alpha.into(),
                row.interval.into(),
                row.radius.into(),
                row.frequency.mean.into(),
                row.frequency.stderr.into(),
                base.frequency.mean.into(),
                base.frequency.stderr.into(),
            ]);
            let se = row.frequency.stderr.hypot(base.frequency.stderr);
            worst = worst.min(row.frequency.mean - base.frequency.mean + 3.0 * se);
        }
        if alpha > 0.0 {
            report.check(
                format!("mcmc confinement alpha={alpha}"),
                worst >= 0.0,
                format!("min over intervals and radii of (freq - baseline + 3 se) = {worst:.4}"),
            );
        }
    }
    let mut sorted = means.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in sorted.windows(2) {
        if w[1].1 > w[0].1 {
            let se = w[0].2.hypot(w[1].2);
            report.warnings.push(format!(
                "estimate rises from alpha={} to alpha={} by {:.4} ({:.1} combined stderr)",
                w[0].0,
                w[1].0,
                w[1].1 - w[0].1,
                (w[1].1 - w[0].1) / se
            ));
        }
    }
    report.table("mcmc.csv", &table);
    report.table("oscillation.csv", &osc);
    Ok(report)
}

fn random_spd<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    &a * a.transpose() + DMatrix::identity(n, n) * 0.3
}

fn random_body<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Result<(ConvexBody, String)> {
    Ok(match rng.random_range(0..3) {
        0 => {
            let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            let h = 0.2 + rng.random::<f64>() * 1.5;
            (ConvexBody::slab(v, h)?, format!("slab(h={h:.3})"))
        }
        1 => {
            let r = 0.5 + rng.random::<f64>() * 2.0;
            (ConvexBody::ball(r)?, format!("ball(r={r:.3})"))
        }
        _ => {
            let h: Vec<f64> = (0..n).map(|_| 0.3 + rng.random::<f64>() * 2.0).collect();
            (ConvexBody::cube(&h)?, "box".to_string())
        }
    })
}

#[derive(Serialize)]
struct GciCase {
    case: usize,
    kind: String,
    dim: usize,
    bodies: Vec<String>,
    #[serde(flatten)]
    report: GciReport,
}

pub fn gci(cfg: &ExperimentConfig) -> Result<Report> {
    let g = &cfg.gci;
    let base = derive_seed(cfg.seed, 2_000_000);
    // Coordinate slabs of a standard Gaussian are independent: exact ties.
    let independent: Vec<GciCase> = (2..=g.max_dim)
        .map(|n| -> Result<GciCase> {
            let mu = GaussianMeasure::new(DMatrix::identity(n, n), 1)?;
            let mut e1 = vec![0.0; n];
            let mut e2 = vec![0.0; n];
            e1[0] = 1.0;
            e2[n - 1] = 1.0;
            let pts = NormalPoints::generate(n, g.points, g.replicates, derive_seed(base, n as u64))?;
            let report = gci_pair_test_with(&mu, &ConvexBody::slab(e1, 1.0)?, &ConvexBody::slab(e2, 1.0)?, &pts)?;
            Ok(GciCase { case: n, kind: "independent".into(), dim: n, bodies: vec!["slab(e1)".into(), "slab(en)".into()], report })
        })
        .collect::<Result<_>>()?;
    let random: Vec<GciCase> = (0..g.cases)
        .into_par_iter()
        .map(|c| -> Result<GciCase> {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(base, 1000 + c as u64));
            let n = rng.random_range(2..=g.max_dim);
            let mu = GaussianMeasure::new(random_spd(&mut rng, n), 1)?;
            let triple = c % 4 == 3;
            let count = if triple { 3 } else { 2 };
            let mut bodies = Vec::new();
            let mut names = Vec::new();
            for _ in 0..count {
                let (b, name) = random_body(&mut rng, n)?;
                bodies.push(b);
                names.push(name);
            }
            let pts = NormalPoints::generate(n, g.points, g.replicates, rng.random())?;
            let report = if triple {
                let ind: Vec<Box<dyn Fn(&[f64]) -> f64 + Sync>> = bodies
                    .iter()
                    .map(|b| Box::new(move |x: &[f64]| if b.contains(x) { 1.0 } else { 0.0 }) as Box<dyn Fn(&[f64]) -> f64 + Sync>)
                    .collect();
                let fs: Vec<&(dyn Fn(&[f64]) -> f64 + Sync)> = ind.iter().map(|f| f.as_ref()).collect();
                gci_functional_test_with(&mu, &fs, 1 + c % 2, &pts)?
            } else {
                gci_pair_test_with(&mu, &bodies[0], &bodies[1], &pts)?
            };
            Ok(GciCase { case: c, kind: if triple { "triple" } else { "pair" }.into(), dim: n, bodies: names, report })
        })
        .collect::<Result<_>>()?;

    let mut report = Report::default();
    let fails = random.iter().chain(&independent).filter(|c| c.report.verdict == Verdict::Fail).count();
    let passes = random.iter().filter(|c| c.report.verdict == Verdict::Pass).count();
    report.check(
        "gci no fail verdicts",
        fails == 0,
        format!("{} random cases: {passes} pass, {} tie, {fails} fail", random.len(), random.len() - passes - fails),
    );
    let worst_tie = max_of(independent.iter().map(|c| c.report.margin.abs() - (TIE_BAND * c.report.stderr + ROUNDOFF)));
    report.check("gci independent slabs tie", worst_tie <= 0.0, format!("max |margin| - 3 se = {worst_tie:.3e}"));
    let mut lines = String::new();
    for c in independent.iter().chain(&random) {
        lines.push_str(&serde_json::to_string(c)?);
        lines.push('\n');
    }
    report.artifacts.push(("gci.jsonl".into(), lines));
    Ok(report)
}

/// `1 - μ(K)` for a standard Gaussian in whitened coordinates.
fn exact_delta(body: &str, dim: usize, size: f64) -> Result<f64> {
    Ok(match body {
        "ball" => 1.0 - ChiSquared::new(dim as f64)?.cdf(size * size),
        _ => {
            let tail = Normal::new(0.0, 1.0)?.cdf(-size);
            -(dim as f64 * (-2.0 * tail).ln_1p()).exp_m1()
        }
    })
}

fn make_body(body: &str, dim: usize, size: f64) -> Result<ConvexBody> {
    Ok(match body {
        "ball" => ConvexBody::ball(size)?,
        _ => ConvexBody::cube(&vec![size; dim])?,
    })
}

struct CaseCheck {
    delta_ok: bool,
    support_violations: usize,
    concavity_violations: usize,
    profile_violations: usize,
}

impl CaseCheck {
    fn passed(&self) -> bool {
        self.delta_ok && self.support_violations == 0 && self.concavity_violations == 0 && self.profile_violations == 0
    }
}

pub fn decomposition(cfg: &ExperimentConfig) -> Result<Report> {
    let d = &cfg.decompose;
    let base = derive_seed(cfg.seed, 3_000_000);
    let mut report = Report::default();
    let mut cases = Vec::new();
    for (k, ((&dim, body_name), &size)) in d.dims.iter().zip(&d.bodies).zip(&d.sizes).enumerate() {
        let seed = |i: u64| derive_seed(base, 100 * k as u64 + i);
        let mut rng = ChaCha8Rng::seed_from_u64(seed(0));
        let mu = GaussianMeasure::new(random_spd(&mut rng, dim), 1)?;
        let body = make_body(body_name, dim, size)?;
        let delta = exact_delta(body_name, dim, size)?;
        let label = format!("d={dim} {body_name}({size})");
        report.check(format!("decompose {label} delta <= {}", d.max_delta), delta <= d.max_delta, format!("delta = {delta:.4e}"));

        let run = |c1: f64, samples: usize, segments: usize, s: u64| -> Result<(CaseCheck, serde_json::Value)> {
            let profile = SigmaProfile::from_delta(delta, c1)?;
            let dec = decompose(&mu, &body, profile, d.delta_samples.max(samples), seed(s))?;
            let good = dec.sample_good_whitened(samples, seed(s + 1))?;
            let support_violations = good.iter().filter(|z| !dec.body.contains_scaled(z, dec.support_dilation())).count();
            let lc = logconcavity_check(&dec, segments, seed(s + 2), d.concavity_tol)?;
            let profile_violations = profile.verify(10_000, 1e-6).total();
            let check = CaseCheck {
                delta_ok: dec.delta_prime.mean <= delta + 3.0 * dec.delta_prime.stderr,
                support_violations,
                concavity_violations: lc.violations,
                profile_violations,
            };
            let summary = json!({
                "c1": c1,
                "level": profile.level,
                "delta_mc": dec.delta.mean,
                "delta_mc_stderr": dec.delta.stderr,
                "delta_prime": dec.delta_prime.mean,
                "delta_prime_stderr": dec.delta_prime.stderr,
                "support_dilation": dec.support_dilation(),
                "support_violations": support_violations,
                "concavity_segments": lc.segments,
                "concavity_violations": lc.violations,
                "worst_concavity_excess": lc.worst_excess,
                "profile_violations": profile_violations,
            });
            Ok((check, summary))
        };

        let (main, main_summary) = run(d.c1, d.good_samples, d.segments, 10)?;
        report.check(
            format!("decompose {label} delta' <= delta"),
            main.delta_ok,
            format!("delta' = {} vs delta = {delta:.4e}", main_summary["delta_prime"]),
        );
        report.check(format!("decompose {label} support"), main.support_violations == 0, format!("{} violations", main.support_violations));
        report.check(
            format!("decompose {label} log-concavity"),
            main.concavity_violations == 0,
            format!("{} violations on {} segments", main.concavity_violations, d.segments),
        );
        report.check(format!("decompose {label} profile"), main.profile_violations == 0, format!("{} violations", main.profile_violations));

        let profile = SigmaProfile::from_delta(delta, d.negative_c1)?;
        let neg = decompose(&mu, &body, profile, d.delta_samples, seed(20))?;
        let neg_lc = logconcavity_check(&neg, d.segments, seed(21), d.concavity_tol)?;
        report.check(
            format!("decompose {label} negative control"),
            neg_lc.violations >= 1,
            format!("C1 = {}: {} violations", d.negative_c1, neg_lc.violations),
        );

        let mut scan = Vec::new();
        let mut smallest = None;
        let mut c1s = d.c1_scan.clone();
        c1s.sort_by(f64::total_cmp);
        for (i, &c1) in c1s.iter().enumerate() {
            let (c, summary) = run(c1, d.scan_samples, d.scan_segments, 30 + 3 * i as u64)?;
            if c.passed() && smallest.is_none() {
                smallest = Some(c1);
            }
            scan.push(json!({ "c1": c1, "passed": c.passed(), "detail": summary }));
        }
        cases.push(json!({
            "dim": dim,
            "body": body_name,
            "size": size,
            "delta": delta,
            "main": main_summary,
            "negative_control": {
                "c1": d.negative_c1,
                "violations": neg_lc.violations,
                "worst_excess": neg_lc.worst_excess,
                "detected": neg_lc.violations >= 1,
            },
            "smallest_passing_c1": smallest,
            "scan": scan,
        }));
    }
    report.json("decompose.json", &json!({ "cases": cases }));
    Ok(report)
}

fn gauss_density(m: f64, v: f64) -> impl Fn(&[f64]) -> f64 + Send + Sync {
    move |x: &[f64]| (-(x[0] - m).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
}

/// Largest discrepancy between reweight-then-coarsen and coarsen-then-reweight.
fn mixture_commutation_error<R: Rng + ?Sized>(rng: &mut R) -> Result<f64> {
    let n = rng.random_range(2..8);
    let params: Vec<(f64, f64)> = (0..n).map(|_| (rng.random::<f64>() * 4.0 - 2.0, 0.2 + rng.random::<f64>() * 3.0)).collect();
    let raw: Vec<f64> = (0..n).map(|_| 0.05 + rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let comps = params.iter().enumerate().map(|(j, &(m, v))| Component::new(format!("c{j}"), gauss_density(m, v))).collect();
    let mix = MixtureDecomposition::new(raw.iter().map(|w| w / total).collect(), comps)?;
    let mut blocks: Vec<Vec<usize>> = vec![Vec::new(); 3];
    for j in 0..n {
        blocks[rng.random_range(0..3)].push(j);
    }
    blocks.retain(|b| !b.is_empty());
    let a = 0.05 + rng.random::<f64>() * 2.0;
    let f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync> = Arc::new(move |x: &[f64]| (-a * x[0] * x[0]).exp());
    let e: Vec<f64> = params
        .iter()
        .map(|&(m, v)| {
            let s = 1.0 + 2.0 * a * v;
            (-a * m * m / s).exp() / s.sqrt()
        })
        .collect();
    let left = mix.reweight(f.clone(), &|j, _| e[j])?.coarsen(&blocks)?;
    let w = mix.weights();
    let block_e: Vec<f64> = blocks
        .iter()
        .map(|b| b.iter().map(|&j| w[j] * e[j]).sum::<f64>() / b.iter().map(|&j| w[j]).sum::<f64>())
        .collect();
    let right = mix.coarsen(&blocks)?.reweight(f, &|k, _| block_e[k])?;
    let mut err = max_of(left.weights().iter().zip(right.weights()).map(|(l, r)| (l - r).abs()));
    for k in 0..blocks.len() {
        for x in [-2.0, -0.5, 0.0, 0.7, 2.5] {
            err = err.max((left.components()[k].density(&[x]) - right.components()[k].density(&[x])).abs());
        }
    }
    Ok(err)
}

struct ScalingPoint {
    s: usize,
    beta: f64,
    gap: f64,
    endpoint: f64,
}

pub fn oracle(cfg: &ExperimentConfig) -> Result<Report> {
    let mut report = Report::default();
    oracle_fourier(cfg, &mut report)?;
    oracle_band(cfg, &mut report)?;
    oracle_scaling(cfg, &mut report)?;
    oracle_mixture(cfg, &mut report)?;
    oracle_product(cfg, &mut report)?;
    Ok(report)
}

pub fn oracle_fourier(cfg: &ExperimentConfig, report: &mut Report) -> Result<()> {
    let o = &cfg.oracle;
    let mut fourier = Table::new(&["t", "partial_sum", "half_t", "absdiff"]);
    let mut worst = 0.0_f64;
    for i in 1..=10 {
        let t = i as f64 / 10.0;
        let s = fourier_identity_check(t, o.fourier_terms);
        worst = worst.max((s - t / 2.0).abs());
        fourier.push(vec![t.into(), s.into(), (t / 2.0).into(), (s - t / 2.0).abs().into()]);
    }
    report.check("oracle fourier identity", worst <= o.fourier_tol, format!("max |S_K - t/2| = {worst:.3e} (tol {:.1e})", o.fourier_tol));
    report.table("fourier.csv", &fourier);
    Ok(())
}

pub fn oracle_band(cfg: &ExperimentConfig, report: &mut Report) -> Result<()> {
    let o = &cfg.oracle;
    let mut band = Table::new(&["beta", "scaled_sup_variance"]);
    let vals: Vec<f64> = o.band_betas.iter().map(|&b| scaled_sup_variance(b, o.band_points, 1e-9)).collect::<polaron_lab::Result<_>>()?;
    for (b, v) in o.band_betas.iter().zip(&vals) {
        band.push(vec![(*b).into(), (*v).into()]);
    }
    let ratio = band_ratio(&vals);
    report.check("oracle sup-variance band", ratio <= o.band_max_ratio, format!("max/min = {ratio:.4} (limit {})", o.band_max_ratio));
    report.table("band.csv", &band);
    Ok(())
}

pub fn oracle_mixture(cfg: &ExperimentConfig, report: &mut Report) -> Result<()> {
    let o = &cfg.oracle;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 4_000_000));
    let mut worst = 0.0_f64;
    for _ in 0..o.mixtures {
        worst = worst.max(mixture_commutation_error(&mut rng)?);
    }
    report.check("oracle mixture commutation", worst <= o.mixture_tol, format!("{} mixtures, max error {worst:.3e}", o.mixtures));
    Ok(())
}

pub fn oracle_product(cfg: &ExperimentConfig, report: &mut Report) -> Result<()> {
    let o = &cfg.oracle;
    let mut product = Table::new(&["horizon", "mask", "prior", "mixture", "direct", "absdiff"]);
    let mut worst = 0.0_f64;
    let mut shortfall = f64::INFINITY;
    let mut summaries = Vec::new();
    for t in 1..=o.product_max_horizon {
        let setup = ProductSetup { horizon: t, alpha: o.product_alpha, c1: o.product_c1, ..Default::default() };
        let r = product_reweight_check(&setup)?;
        for m in 0..r.mixture.len() {
            product.push(vec![
                t.into(),
                format!("{m:0t$b}").into(),
                r.prior[m].into(),
                r.mixture[m].into(),
                r.direct[m].into(),
                (r.mixture[m] - r.direct[m]).abs().into(),
            ]);
        }
        worst = worst.max(r.max_abs_diff);
        shortfall = shortfall.min(r.expected_good - t as f64 * (1.0 - r.delta_prime));
        summaries.push(json!({
            "horizon": t,
            "delta": r.delta,
            "delta_prime": r.delta_prime,
            "max_abs_diff": r.max_abs_diff,
            "expected_good": r.expected_good,
            "good_marginals": r.good_marginals,
        }));
    }
    report.check("oracle product reweighting", worst <= o.product_tol, format!("max |mixture - direct| = {worst:.3e} (tol {:.1e})", o.product_tol));
    report.check("oracle product good count", shortfall >= 0.0, format!("min E[#good] - T(1 - delta') = {shortfall:.3e}"));
    report.table("product.csv", &product);
    report.json("product.json", &summaries);
    Ok(())
}

pub fn oracle_scaling(cfg: &ExperimentConfig, report: &mut Report) -> Result<()> {
    let o = &cfg.oracle;
    let m = o.scaling_steps_per_unit;
    let tol = o.scaling_slope_tol;

    let pair = Lattice::new(2, m, 1)?;
    let diff = LinearFunctional::interval_average(&pair, 0)?.sub(&LinearFunctional::interval_average(&pair, 1)?)?;
    let adjacent: Vec<f64> = o
        .scaling_betas
        .iter()
        .map(|&b| Ok(confined_measure(&pair, b, &[0, 1], &[0])?.variance(diff.coefficients())?))
        .collect::<Result<_>>()?;

    let points: Vec<ScalingPoint> = o
        .scaling_separations
        .iter()
        .flat_map(|&s| o.scaling_betas.iter().map(move |&b| (s, b)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(s, beta)| -> Result<ScalingPoint> {
            let l = Lattice::new(s, m, 1)?;
            let mu = block_measure(&l, beta, 0, s)?;
            let a = LinearFunctional::interval_average(&l, 0)?.sub(&LinearFunctional::interval_average(&l, s - 1)?)?;
            let gap = mu.variance(a.coefficients())?;
            let endpoint = mu.variance(LinearFunctional::point(&l, l.steps())?.coefficients())?;
            Ok(ScalingPoint { s, beta, gap, endpoint })
        })
        .collect::<Result<_>>()?;

    let mut table = Table::new(&["quantity", "separation", "beta", "value"]);
    for (b, v) in o.scaling_betas.iter().zip(&adjacent) {
        table.push(vec!["adjacent_gap".into(), 2usize.into(), (*b).into(), (*v).into()]);
    }
    for p in &points {
        table.push(vec!["separated_gap".into(), p.s.into(), p.beta.into(), p.gap.into()]);
        table.push(vec!["endpoint".into(), p.s.into(), p.beta.into(), p.endpoint.into()]);
    }
    report.table("scaling.csv", &table);

    let mut fits = Vec::new();
    let mut record = |name: String, slope: f64, target: f64| {
        fits.push(json!({ "fit": name, "slope": slope, "target": target }));
        (slope - target).abs() <= tol
    };
    let mut ok = record("adjacent gap vs beta".into(), fit_loglog(&o.scaling_betas, &adjacent)?.slope, -1.0);
    let at = |s: usize, b: f64| points.iter().find(|p| p.s == s && p.beta == b).expect("grid point");
    let s_min = *o.scaling_separations.iter().min().expect("nonempty");
    for &s in &o.scaling_separations {
        let ys: Vec<f64> = o.scaling_betas.iter().map(|&b| at(s, b).gap).collect();
        ok &= record(format!("separated gap vs beta, s={s}"), fit_loglog(&o.scaling_betas, &ys)?.slope, -1.0);
        if s > s_min {
            let ys: Vec<f64> = o.scaling_betas.iter().map(|&b| at(s, b).endpoint - at(s_min, b).endpoint).collect();
            ok &= record(format!("endpoint drift vs beta, s={s}"), fit_loglog(&o.scaling_betas, &ys)?.slope, -1.0);
        }
    }
    let mut bound_ok = true;
    for &b in &o.scaling_betas {
        let xs: Vec<f64> = o.scaling_separations.iter().map(|&s| (s - 1) as f64).collect();
        let ys: Vec<f64> = o.scaling_separations.iter().map(|&s| at(s, b).gap).collect();
        ok &= record(format!("separated gap vs s-1, beta={b}"), fit_loglog(&xs, &ys)?.slope, 1.0);
        let (xs, ys): (Vec<f64>, Vec<f64>) = o
            .scaling_separations
            .iter()
            .filter(|&&s| s > s_min)
            .map(|&s| ((s - s_min) as f64, at(s, b).endpoint - at(s_min, b).endpoint))
            .unzip();
        ok &= record(format!("endpoint drift vs s-{s_min}, beta={b}"), fit_loglog(&xs, &ys)?.slope, 1.0);
        for &s in &o.scaling_separations {
            bound_ok &= at(s, b).endpoint <= o.endpoint_constant * (s as f64 / b + b.powf(-0.5));
        }
    }
    let worst = fits
        .iter()
        .map(|f| (f["slope"].as_f64().unwrap_or(f64::NAN) - f["target"].as_f64().unwrap_or(f64::NAN)).abs())
        .fold(0.0, f64::max);
    report.check("oracle block scalings", ok, format!("{} fits, max |slope - target| = {worst:.4} (tol {tol})", fits.len()));
    report.check(
        "oracle endpoint bound",
        bound_ok,
        format!("Var(B_s) <= {} (s/beta + beta^-1/2) on the grid", o.endpoint_constant),
    );
    report.json("scaling.json", &fits);
    Ok(())
}

/// Parse a subcommand name as used on the command line.
pub fn parse_command(name: &str) -> Result<Command> {
    use clap::ValueEnum;
    Command::from_str(name, true).map_err(|e| anyhow!(e))
}
