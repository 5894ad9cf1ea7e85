use std::sync::Arc;

use nalgebra::Matrix3;
use polaron_lab::polaron::{
    brownian_oscillation_baseline, interaction_energy, mcmc_chain, mcmc_pooled, oscillation_stats, potential_va, Kernel,
    McmcEstimate, PolaronConfig, Proposal,
};
use polaron_lab::Lattice;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn small(alpha: f64) -> PolaronConfig {
    PolaronConfig::new(alpha, 2, 1.0 / 8.0, 2.0).unwrap()
}

fn random_increments(cfg: &PolaronConfig, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = cfg.lattice.eta().sqrt();
    (0..cfg.lattice.steps() * 3)
        .map(|_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            sd * g
        })
        .collect()
}

/// Direct double loop over path points, diagonal included.
fn brute_energy(cfg: &PolaronConfig, x: &[f64]) -> f64 {
    let n = cfg.lattice.steps();
    let eta = cfg.lattice.eta();
    let mut pts = vec![[0.0; 3]; n];
    for j in 1..n {
        for c in 0..3 {
            pts[j][c] = pts[j - 1][c] + x[(j - 1) * 3 + c];
        }
    }
    let mut e = 0.0;
    for j in 0..n {
        for l in 0..n {
            let r = (0..3).map(|c| (pts[j][c] - pts[l][c]).powi(2)).sum::<f64>().sqrt();
            e += cfg.kernel.eval(j as f64 * eta, l as f64 * eta) * potential_va(r, cfg.cutoff, cfg.p);
        }
    }
    eta * eta * e
}

#[test]
fn energy_matches_direct_double_sum() {
    for seed in 0..5 {
        let mut cfg = small(1.0);
        let x = random_increments(&cfg, seed);
        let e = interaction_energy(&x, &cfg).unwrap();
        assert!((e - brute_energy(&cfg, &x)).abs() <= 1e-12 * e.abs());
        cfg.p = 0.6;
        let e = interaction_energy(&x, &cfg).unwrap();
        assert!((e - brute_energy(&cfg, &x)).abs() <= 1e-12 * e.abs());
    }
}

#[test]
fn energy_is_rotation_invariant() {
    let cfg = small(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = Matrix3::from_fn(|_, _| rng.random::<f64>() - 0.5);
    let q = a.qr().q();
    for seed in 0..5 {
        let x = random_increments(&cfg, seed);
        let rotated: Vec<f64> = x
            .chunks(3)
            .flat_map(|v| {
                let r = q * nalgebra::Vector3::new(v[0], v[1], v[2]);
                [r[0], r[1], r[2]]
            })
            .collect();
        let e = interaction_energy(&x, &cfg).unwrap();
        assert!((e - interaction_energy(&rotated, &cfg).unwrap()).abs() <= 1e-12 * e);
        let reflected: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((e - interaction_energy(&reflected, &cfg).unwrap()).abs() <= 1e-12 * e);
    }
}

#[test]
fn energy_is_monotone_in_the_cutoff() {
    let x = random_increments(&small(1.0), 3);
    let mut prev = 0.0;
    for &a in &[0.5, 1.0, 2.0, 4.0, 16.0, 64.0] {
        let cfg = PolaronConfig::new(1.0, 2, 1.0 / 8.0, a).unwrap();
        let e = interaction_energy(&x, &cfg).unwrap();
        assert!(e >= prev);
        prev = e;
    }
}

#[test]
fn custom_kernel_is_used() {
    let mut cfg = small(1.0);
    cfg.kernel = Kernel::Custom(Arc::new(|_, _| 1.0));
    let zero = vec![0.0; cfg.lattice.steps() * 3];
    let n = cfg.lattice.steps() as f64;
    let expected = (n * cfg.lattice.eta()).powi(2) * 2.0 * cfg.cutoff;
    assert!((interaction_energy(&zero, &cfg).unwrap() - expected).abs() < 1e-12);
    assert!(interaction_energy(&zero[1..], &cfg).is_err());
}

#[test]
fn free_chain_reproduces_brownian_moments() {
    let cfg = small(0.0);
    let prop = Proposal { thin: 10, ..Default::default() };
    let (est, chains) = mcmc_pooled(&cfg, 40_000, 21, &prop, 2).unwrap();
    let e = est.checked().unwrap();
    assert!(e.within(6.0, 4.0), "{e:?}");
    let m = cfg.lattice.steps_per_unit();
    for t in 1..=2 {
        for c in &chains {
            let s = c.point_second_moment(&cfg.lattice, t * m).unwrap();
            assert!(s.within(3.0 * t as f64, 4.0), "t={t}: {s:?}");
        }
    }
}

#[test]
fn attraction_shrinks_the_endpoint() {
    let prop = Proposal::default();
    let free = mcmc_chain(&small(0.0), 40_000, 5, &prop).unwrap().estimate();
    let bound = mcmc_chain(&small(3.0), 40_000, 5, &prop).unwrap().estimate();
    let se = (free.stderr.powi(2) + bound.stderr.powi(2)).sqrt();
    assert!(free.mean - bound.mean > 3.0 * se, "{free:?} {bound:?}");
}

#[test]
fn oscillation_frequencies_are_monotone() {
    let cfg = small(1.0);
    let chain = mcmc_chain(&cfg, 20_000, 6, &Proposal::default()).unwrap();
    let radii = [0.5, 1.0, 2.0, 4.0, f64::INFINITY];
    let rows = oscillation_stats(std::slice::from_ref(&chain), &radii).unwrap();
    for i in 0..2 {
        let f: Vec<f64> = rows.iter().filter(|r| r.interval == i).map(|r| r.frequency.mean).collect();
        for w in f.windows(2) {
            assert!(w[1] >= w[0]);
        }
        assert_eq!(*f.last().unwrap(), 1.0);
    }
}

#[test]
fn brownian_oscillation_at_radius_ten_is_almost_certain() {
    let l = Lattice::from_eta(4, 1.0 / 16.0, 3).unwrap();
    let rows = brownian_oscillation_baseline(&l, &[10.0], 10_000, 1).unwrap();
    for r in rows {
        assert!(r.frequency.mean >= 0.999);
    }
    let free = mcmc_chain(&small(0.0), 20_000, 8, &Proposal::default()).unwrap();
    for r in oscillation_stats(&[free], &[10.0]).unwrap() {
        assert!(r.frequency.mean >= 0.999);
    }
}

#[test]
fn standard_error_shrinks_like_root_steps() {
    let cfg = small(0.5);
    let prop = Proposal::default();
    let avg = |steps: usize| (0..8).map(|s| mcmc_chain(&cfg, steps, 100 + s, &prop).unwrap().estimate().stderr).sum::<f64>() / 8.0;
    let ratio = avg(20_000) / avg(40_000);
    assert!((1.2..=1.7).contains(&ratio), "{ratio}");
}

#[test]
fn low_effective_sample_size_is_refused() {
    let e = McmcEstimate { mean: 1.0, stderr: 0.1, ess: 50.0, accept_rate: 0.3, steps: 10_000, seed: 0 };
    assert!(e.checked().is_err());
    assert!(McmcEstimate { ess: 100.0, ..e }.checked().is_ok());
}

#[test]
fn chains_are_deterministic_per_seed() {
    let cfg = small(1.0);
    let prop = Proposal { thin: 100, ..Default::default() };
    let a = mcmc_chain(&cfg, 10_000, 42, &prop).unwrap();
    let b = mcmc_chain(&cfg, 10_000, 42, &prop).unwrap();
    assert_eq!(a, b);
    let c = mcmc_chain(&cfg, 10_000, 43, &prop).unwrap();
    assert_ne!(a.end_sq, c.end_sq);
    let (p1, _) = mcmc_pooled(&cfg, 10_000, 7, &prop, 3).unwrap();
    let (p2, _) = mcmc_pooled(&cfg, 10_000, 7, &prop, 3).unwrap();
    assert_eq!(p1, p2);
}

#[test]
fn invalid_settings_are_rejected() {
    assert!(PolaronConfig::new(-1.0, 2, 0.125, 2.0).is_err());
    assert!(PolaronConfig::new(1.0, 2, 0.125, 0.0).is_err());
    let mut cfg = small(1.0);
    cfg.p = 2.0;
    assert!(cfg.validate().is_err());
    assert!(mcmc_chain(&small(1.0), 9_999, 1, &Proposal::default()).is_err());
    assert!(mcmc_pooled(&small(1.0), 10_000, 1, &Proposal::default(), 0).is_err());
}
