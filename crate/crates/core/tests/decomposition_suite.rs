use polaron_lab::decomposition::{decompose, logconcavity_check, sigma_tilde, Decomposition, SigmaProfile};
use polaron_lab::stats::batch_means;
use polaron_lab::{ConvexBody, GaussianMeasure, ProjectionOptions};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

fn ball_case() -> Decomposition {
    let delta = 1.0 - ChiSquared::new(2.0).unwrap().cdf(16.0);
    let mu = GaussianMeasure::standard(2).unwrap();
    decompose(&mu, &ConvexBody::ball(4.0).unwrap(), SigmaProfile::from_delta(delta, 2.0).unwrap(), 200_000, 1).unwrap()
}

#[test]
fn tilde_branch_values() {
    let (r, c) = (3.0, 2.0);
    assert_eq!(sigma_tilde(0.0, r, c).unwrap(), 9.0);
    assert!((sigma_tilde(c * r + 1.0, r, c).unwrap() - 4.5).abs() < 1e-12);
    assert_eq!(sigma_tilde(2.0 * c * r + 1.0, r, c).unwrap(), 0.0);
    assert!(sigma_tilde(1.0, 0.0, c).is_err());
}

#[test]
fn smooth_profile_satisfies_shape_conditions() {
    for &(level, c1) in &[(2.0, 2.0), (5.0, 3.0), (1.5, 1.0), (8.0, 10.0)] {
        let p = SigmaProfile::new(level, c1).unwrap();
        assert_eq!(p.verify(10_000, 1e-6).total(), 0, "R={level} C1={c1}");
        assert_eq!(p.value(3.0 * c1 * level), 0.0);
        for i in 0..=100 {
            assert_eq!(p.value(i as f64 / 100.0 * (1.0 - p.width)), level * level);
        }
        let curvature = (0..10_000).map(|i| p.eval(i as f64 * p.support_end() / 10_000.0).2.abs()).fold(0.0, f64::max);
        assert!(curvature <= 1.0 / c1 + 1e-6);
    }
}

#[test]
fn small_ball_case_bad_mass_and_support() {
    let d = ball_case();
    assert!((d.delta.mean - 3.35e-4).abs() < 2e-4);
    let exact = 1.0 - ChiSquared::new(2.0).unwrap().cdf(16.0);
    assert!(d.delta_prime.mean <= exact + 3.0 * d.delta_prime.stderr, "{:?}", d.delta_prime);
    let good = d.sample_good(100_000, 2).unwrap();
    let violations = good.iter().filter(|x| !d.body.contains_scaled(x, d.support_dilation())).count();
    assert_eq!(violations, 0);
}

#[test]
fn mixture_identity_holds_pointwise() {
    let d = ball_case();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dp = d.delta_prime.mean;
    for _ in 0..1000 {
        let z: Vec<f64> = (0..2)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                3.0 * g
            })
            .collect();
        let mix = (1.0 - dp) * d.good_density(&z).unwrap() + dp * d.bad_density(&z).unwrap();
        assert!((mix - 1.0).abs() < 1e-10);
    }
}

#[test]
fn good_density_decreases_along_rays() {
    let d = ball_case();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let u = unit(&mut rng, 2);
        let mut prev = f64::INFINITY;
        for k in 0..60 {
            let t = k as f64 * 0.25;
            let g = d.good_density(&[u[0] * t, u[1] * t]).unwrap();
            assert!(g <= prev + 1e-12);
            prev = g;
        }
    }
}

#[test]
fn inner_ball_sits_inside_body() {
    let d = ball_case();
    let box3 = ConvexBody::cube(&[3.7; 3]).unwrap();
    let p3 = SigmaProfile::from_delta(1e-3, 2.0).unwrap();
    let d3 = decompose(&GaussianMeasure::standard(3).unwrap(), &box3, p3, 20_000, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for dec in [&d, &d3] {
        let n = dec.mu.flat_len();
        for _ in 0..1000 {
            let u = unit(&mut rng, n);
            let x: Vec<f64> = u.iter().map(|v| v * dec.inradius()).collect();
            assert!(dec.body.contains(&x));
        }
    }
}

#[test]
fn good_part_gives_more_mass_to_symmetric_convex_sets() {
    let body = ConvexBody::cube(&[2.5, 2.5, 2.5]).unwrap();
    let p = SigmaProfile::from_delta(0.05, 2.0).unwrap();
    let d = decompose(&GaussianMeasure::standard(3).unwrap(), &body, p, 40_000, 6).unwrap();
    let good = d.sample_good_whitened(40_000, 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let base: Vec<Vec<f64>> = (0..40_000).map(|_| (0..3).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
    for k in 0..20 {
        let normal = unit(&mut rng, 3);
        let test = ConvexBody::slab(normal, 0.3 + 0.1 * k as f64).unwrap();
        let freq = |xs: &[Vec<f64>]| batch_means(&xs.iter().map(|x| test.contains(x) as u8 as f64).collect::<Vec<_>>(), 32);
        let (g, m) = (freq(&good), freq(&base));
        let se = (g.stderr.powi(2) + m.stderr.powi(2)).sqrt();
        assert!(g.mean >= m.mean - 3.0 * se, "{g:?} vs {m:?}");
    }
}

#[test]
fn logconcavity_holds_for_large_c1_and_breaks_for_small() {
    let body = ConvexBody::cube(&[3.7; 3]).unwrap();
    let mu = GaussianMeasure::standard(3).unwrap();
    let good = decompose(&mu, &body, SigmaProfile::from_delta(1e-3, 2.0).unwrap(), 20_000, 9).unwrap();
    let r = logconcavity_check(&good, 1000, 10, 1e-6).unwrap();
    assert_eq!(r.violations, 0, "{r:?}");
    let bad = decompose(&mu, &body, SigmaProfile::from_delta(1e-3, 0.01).unwrap(), 20_000, 9).unwrap();
    let r = logconcavity_check(&bad, 1000, 10, 1e-6).unwrap();
    assert!(r.violations >= 1, "{r:?}");
}

#[test]
fn correlated_measure_decomposes_in_whitened_coordinates() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = nalgebra::DMatrix::from_fn(8, 8, |_, _| rng.random::<f64>() - 0.5);
    let mu = GaussianMeasure::new(&a * a.transpose() + nalgebra::DMatrix::identity(8, 8), 1).unwrap();
    let delta = 1.0 - ChiSquared::new(8.0).unwrap().cdf(5.3 * 5.3);
    let d = decompose(&mu, &ConvexBody::ball(5.3).unwrap(), SigmaProfile::from_delta(delta, 2.0).unwrap(), 20_000, 12).unwrap();
    assert!(d.delta_prime.mean <= delta + 3.0 * d.delta_prime.stderr);
    let xs = d.sample_good(2000, 13).unwrap();
    for x in &xs {
        let z = mu.whiten(x);
        assert!(d.body.contains_scaled(&z, d.support_dilation()));
    }
    assert!(d.body.distance(&vec![0.0; 8], ProjectionOptions::default()).unwrap() == 0.0);
}
