use nalgebra::DMatrix;
use polaron_lab::lattice::{adjacent_coupling_form, block_measure, brownian, confined_measure, intra_interval_form};
use polaron_lab::stats::linear_fit;
use polaron_lab::{spectral, GaussianMeasure, Lattice, LinearFunctional, QuadraticForm};

/// Maps increments to the `n + 1` path values.
fn path_map(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n + 1, n, |j, k| if k < j { 1.0 } else { 0.0 })
}

/// `η² Σ_{j∈g1, l∈g2} (B_j - B_l)²` assembled point pair by point pair.
fn brute_pair_form(l: &Lattice, g1: std::ops::Range<usize>, g2: std::ops::Range<usize>) -> DMatrix<f64> {
    let n = l.steps();
    let mut p = DMatrix::zeros(n + 1, n + 1);
    let e2 = l.eta() * l.eta();
    for j in g1 {
        for k in g2.clone() {
            p[(j, j)] += e2;
            p[(k, k)] += e2;
            p[(j, k)] -= e2;
            p[(k, j)] -= e2;
        }
    }
    let s = path_map(n);
    s.transpose() * p * s
}

fn rank_one(a: &LinearFunctional) -> DMatrix<f64> {
    let v = DMatrix::from_column_slice(a.coefficients().len(), 1, a.coefficients());
    &v * v.transpose()
}

/// `η Σ_{j∈grid(i)} (B_j - B̄_i)²` with the left Riemann average.
fn spread_form(l: &Lattice, i: usize) -> DMatrix<f64> {
    let avg = LinearFunctional::riemann_average(l, i).unwrap();
    let mut m = DMatrix::zeros(l.steps(), l.steps());
    for j in l.grid(i) {
        let d = LinearFunctional::point(l, j).unwrap().sub(&avg).unwrap();
        m += rank_one(&d) * l.eta();
    }
    m
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
}

#[test]
fn two_interval_square_decomposes_into_intra_and_spread_terms() {
    let l = Lattice::from_eta(2, 1.0 / 16.0, 1).unwrap();
    let m = l.steps_per_unit();
    let whole = brute_pair_form(&l, 0..2 * m, 0..2 * m);
    let q0 = intra_interval_form(&l, 0).unwrap();
    let q1 = intra_interval_form(&l, 1).unwrap();
    let cross = adjacent_coupling_form(&l, 0).unwrap();
    let assembled = q0.matrix() + q1.matrix() + cross.matrix() * 2.0;
    assert!(max_abs(&(&whole - &assembled)) < 1e-12);

    let diff = LinearFunctional::riemann_average(&l, 0).unwrap().sub(&LinearFunctional::riemann_average(&l, 1).unwrap()).unwrap();
    let lhs = &whole - rank_one(&diff) * 2.0;
    let (s0, s1) = (spread_form(&l, 0), spread_form(&l, 1));
    let rhs = q0.matrix() + q1.matrix() + (&s0 + &s1) * 2.0;
    assert!(max_abs(&(&lhs - &rhs)) < 1e-10, "{}", max_abs(&(&lhs - &rhs)));

    // With unit weight on the spread terms the difference is exactly the spread terms, which are nonzero.
    let unit = q0.matrix() + q1.matrix() + &s0 + &s1;
    assert!(max_abs(&(&lhs - &unit - (&s0 + &s1))) < 1e-10);
    assert!(max_abs(&(&s0 + &s1)) > 1e-3);
    // Still gives Q[0,2] ≥ 2 Q[0,1],[1,2] ≥ 0.
    assert!(QuadraticForm::new(lhs, true, "residual").is_ok());
}

#[test]
fn forms_match_brute_force_assembly() {
    let l = Lattice::from_eta(3, 1.0 / 8.0, 1).unwrap();
    for i in 0..3 {
        let q = intra_interval_form(&l, i).unwrap();
        let b = brute_pair_form(&l, l.grid(i), l.grid(i));
        assert!(max_abs(&(q.matrix() - b)) < 1e-12);
    }
    for i in 0..2 {
        let q = adjacent_coupling_form(&l, i).unwrap();
        let b = brute_pair_form(&l, l.grid(i), l.grid(i + 1));
        assert!(max_abs(&(q.matrix() - b)) < 1e-12);
    }
    assert!(adjacent_coupling_form(&l, 2).is_err());
    assert!(intra_interval_form(&l, 3).is_err());
}

#[test]
fn difference_of_averages_on_linear_path() {
    let l = Lattice::from_eta(2, 1.0 / 64.0, 1).unwrap();
    let x = vec![l.eta(); l.steps()];
    let d = LinearFunctional::interval_average(&l, 0).unwrap().sub(&LinearFunctional::interval_average(&l, 1).unwrap()).unwrap();
    assert!((d.apply(&x, 1, 0) + 1.0).abs() < 1e-12);
}

#[test]
fn average_variance_under_brownian_is_one_third() {
    let l = Lattice::from_eta(1, 1.0 / 256.0, 1).unwrap();
    let v = brownian(&l).second_moment(&LinearFunctional::interval_average(&l, 0).unwrap()).unwrap();
    assert!((v - 1.0 / 3.0).abs() < 1.0 / 256.0);
    assert_eq!(brownian(&l).second_moment(&LinearFunctional::zero(&l)).unwrap(), 0.0);
}

#[test]
fn confined_endpoint_variance_matches_series() {
    let l = Lattice::from_eta(1, 1.0 / 256.0, 1).unwrap();
    let mu = confined_measure(&l, 100.0, &[0], &[]).unwrap();
    let matrix = mu.variance(LinearFunctional::point(&l, l.steps()).unwrap().coefficients()).unwrap();
    let series = spectral::variance_series(100.0, 1.0, 1e-10).unwrap();
    assert!((matrix - series).abs() < 5e-3, "{matrix} vs {series}");
}

#[test]
fn coupled_average_difference_scales_inversely_with_beta() {
    let l = Lattice::from_eta(2, 1.0 / 64.0, 1).unwrap();
    let d = LinearFunctional::interval_average(&l, 0).unwrap().sub(&LinearFunctional::interval_average(&l, 1).unwrap()).unwrap();
    let c: Vec<f64> = [1e2, 1e3, 1e4]
        .iter()
        .map(|&b| b * confined_measure(&l, b, &[0, 1], &[0]).unwrap().variance(d.coefficients()).unwrap())
        .collect();
    let (lo, hi) = c.iter().fold((f64::MAX, 0.0_f64), |(a, b), v| (a.min(*v), b.max(*v)));
    assert!(hi / lo < 1.2, "{c:?}");
    let v100 = confined_measure(&l, 100.0, &[0, 1], &[0]).unwrap().variance(d.coefficients()).unwrap();
    assert!(v100 <= 3.0 * hi / 100.0);
}

#[test]
fn confinement_never_increases_variance() {
    let l = Lattice::from_eta(4, 1.0 / 16.0, 1).unwrap();
    let bm = brownian(&l);
    let measures = [
        confined_measure(&l, 10.0, &[0, 2], &[]).unwrap(),
        confined_measure(&l, 50.0, &[1, 2], &[1]).unwrap(),
        block_measure(&l, 5.0, 0, 4).unwrap(),
    ];
    let mut functionals: Vec<LinearFunctional> = (0..=l.steps()).map(|j| LinearFunctional::point(&l, j).unwrap()).collect();
    functionals.extend((0..4).map(|i| LinearFunctional::interval_average(&l, i).unwrap()));
    functionals.push(LinearFunctional::new((0..l.steps()).map(|k| ((k * 7) % 5) as f64 - 2.0).collect()).unwrap());
    for mu in &measures {
        for a in &functionals {
            let (v, b) = (mu.variance(a.coefficients()).unwrap(), bm.variance(a.coefficients()).unwrap());
            assert!(v <= b + 1e-10, "{v} > {b}");
        }
    }
}

fn block_average_gap(s: usize, beta: f64) -> f64 {
    let l = Lattice::from_eta(s, 1.0 / 64.0, 1).unwrap();
    let mu = block_measure(&l, beta, 0, s).unwrap();
    let a = LinearFunctional::interval_average(&l, 0).unwrap().sub(&LinearFunctional::interval_average(&l, s - 1).unwrap()).unwrap();
    mu.variance(a.coefficients()).unwrap()
}

fn block_endpoint(s: usize, beta: f64) -> f64 {
    let l = Lattice::from_eta(s, 1.0 / 64.0, 1).unwrap();
    block_measure(&l, beta, 0, s).unwrap().variance(LinearFunctional::point(&l, l.steps()).unwrap().coefficients()).unwrap()
}

#[test]
fn separated_average_gap_is_linear_in_separation_over_beta() {
    let betas = [1e2, 1e3, 1e4];
    let ss = [2usize, 4, 8];
    let table: Vec<Vec<f64>> = betas.iter().map(|&b| ss.iter().map(|&s| block_average_gap(s, b)).collect()).collect();
    for (bi, &b) in betas.iter().enumerate() {
        let xs: Vec<f64> = ss.iter().map(|&s| ((s - 1) as f64).ln()).collect();
        let ys: Vec<f64> = table[bi].iter().map(|v| v.ln()).collect();
        let fit = linear_fit(&xs, &ys).unwrap();
        assert!((fit.slope - 1.0).abs() < 0.1, "beta {b}: slope {}", fit.slope);
        for (si, &s) in ss.iter().enumerate() {
            assert!(table[bi][si] <= 0.5 * s as f64 / b);
        }
    }
    for si in 0..ss.len() {
        let xs: Vec<f64> = betas.iter().map(|b| b.ln()).collect();
        let ys: Vec<f64> = table.iter().map(|r| r[si].ln()).collect();
        let fit = linear_fit(&xs, &ys).unwrap();
        assert!((fit.slope + 1.0).abs() < 0.1, "s {}: slope {}", ss[si], fit.slope);
    }
}

#[test]
fn block_endpoint_variance_has_drift_and_floor_terms() {
    for &b in &[1e2, 1e3, 1e4] {
        let base = block_endpoint(2, b);
        assert!(base <= 2.0 * (2.0 / b + b.powf(-0.5)));
        let ss = [4usize, 8];
        let excess: Vec<f64> = ss.iter().map(|&s| block_endpoint(s, b) - base).collect();
        for (k, &s) in ss.iter().enumerate() {
            assert!(base + excess[k] <= 2.0 * (s as f64 / b + b.powf(-0.5)));
            let rate = excess[k] * b / (s - 2) as f64;
            assert!(rate > 0.3 && rate < 0.6, "beta {b} s {s}: {rate}");
        }
    }
}

#[test]
fn endpoint_variance_converges_under_mesh_refinement() {
    let etas = [32usize, 64, 128, 256];
    let vals: Vec<f64> = etas
        .iter()
        .map(|&m| {
            let l = Lattice::new(1, m, 1).unwrap();
            let mu = confined_measure(&l, 100.0, &[0], &[]).unwrap();
            mu.variance(LinearFunctional::point(&l, m).unwrap().coefficients()).unwrap()
        })
        .collect();
    let diffs: Vec<f64> = vals.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    for w in diffs.windows(2) {
        assert!(w[1] < w[0], "{diffs:?}");
    }
    let order = (diffs[1] / diffs[2]).log2();
    assert!(order > 0.5, "{diffs:?}");
    let limit = spectral::variance_series(100.0, 1.0, 1e-12).unwrap();
    for k in 1..vals.len() {
        let richardson = (vals[k] - vals[k - 1]).abs() / (2f64.powf(order) - 1.0);
        assert!((vals[k] - limit).abs() <= 2.0 * richardson, "eta 1/{}: {} vs {richardson}", etas[k], vals[k] - limit);
    }
}

#[test]
fn sampled_endpoint_matches_brownian_moment() {
    let l = Lattice::from_eta(4, 1.0, 3).unwrap();
    let bm = brownian(&l);
    let draws = bm.sample(100_000, 11).unwrap();
    let end = LinearFunctional::point(&l, 4).unwrap();
    let v: Vec<f64> = draws.iter().map(|x| (0..3).map(|c| end.apply(x, 3, c).powi(2)).sum()).collect();
    let e = polaron_lab::stats::batch_means(&v, 32);
    assert!(e.within(12.0, 3.0), "{e:?}");
    assert!((bm.second_moment(&end).unwrap() - 12.0).abs() < 1e-12);
}

#[test]
fn sampled_confined_variance_matches_exact_entry() {
    let l = Lattice::from_eta(1, 1.0 / 64.0, 1).unwrap();
    let mu = confined_measure(&l, 100.0, &[0], &[]).unwrap();
    let end = LinearFunctional::point(&l, l.steps()).unwrap();
    let exact = mu.variance(end.coefficients()).unwrap();
    let v: Vec<f64> = mu.sample(40_000, 5).unwrap().iter().map(|x| end.apply(x, 1, 0).powi(2)).collect();
    let e = polaron_lab::stats::batch_means(&v, 32);
    assert!(e.within(exact, 3.0), "{e:?} vs {exact}");
}

#[test]
fn dilation_commutes_with_quartered_reweighting() {
    let l = Lattice::from_eta(2, 1.0 / 8.0, 1).unwrap();
    let q = intra_interval_form(&l, 1).unwrap().scaled(3.0);
    let bm = brownian(&l);
    let a = bm.dilate2().reweight_quadratic(&q).unwrap();
    let b = bm.reweight_quadratic(&q.scaled(4.0)).unwrap().dilate2();
    assert!(max_abs(&(a.covariance() - b.covariance())) < 1e-12);
    let twice = bm.dilate2().dilate2();
    assert!(max_abs(&(twice.covariance() - bm.covariance() * 16.0)) < 1e-12);
}

#[test]
fn dilated_brownian_endpoint_is_twelve() {
    let l = Lattice::from_eta(1, 1.0 / 8.0, 3).unwrap();
    let v = brownian(&l).dilate2().second_moment(&LinearFunctional::point(&l, 8).unwrap()).unwrap();
    assert!((v - 12.0).abs() < 1e-12);
}

#[test]
fn one_dimensional_slab_probability() {
    let mu = GaussianMeasure::standard(1).unwrap();
    let k = polaron_lab::ConvexBody::slab(vec![1.0], 1.0).unwrap();
    let e = mu.convex_prob(&k, 100_000, 3).unwrap();
    assert!(e.within(0.682_689_492_137_086, 3.0), "{e:?}");
}

#[test]
fn brownian_oscillation_set_is_almost_sure_at_radius_ten() {
    let l = Lattice::from_eta(1, 1.0 / 64.0, 1).unwrap();
    let k = polaron_lab::ConvexBody::oscillation(0, 64, 1, 10.0).unwrap();
    let e = brownian(&l).convex_prob(&k, 20_000, 9).unwrap();
    assert!(e.mean >= 0.999);
}
