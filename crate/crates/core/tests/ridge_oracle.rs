mod common;

use common::*;
use faer::Mat;
use mtridge::bench::{generate_synthetic, SynthSpec};
use mtridge::ridge::{
    fit_weights, predict, resolution_matrix_direct, resolution_matrix_svd, ridge_weights, svd_decompose,
};
use mtridge::selection::{pearson_test_score, DEFAULT_LAMBDAS};
use mtridge::{Error, FeatureMatrix, TargetMatrix};
use rand::Rng;

fn features(m: &Mat<f64>) -> FeatureMatrix {
    FeatureMatrix::new(m.clone()).unwrap()
}

fn targets(m: &Mat<f64>) -> TargetMatrix {
    TargetMatrix::new(m.clone()).unwrap()
}

fn max_abs(m: &Mat<f64>) -> f64 {
    let mut best = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            best = best.max(m[(i, j)].abs());
        }
    }
    best
}

#[test]
fn svd_factor_invariants() {
    let mut r = rng(11);
    for (n, p) in [(20, 5), (64, 64), (150, 40)] {
        let x = uniform(n, p, &mut r);
        let f = svd_decompose(&features(&x)).unwrap();
        let (u, v) = (f.u().to_owned(), f.v().to_owned());
        assert!(f.s().windows(2).all(|w| w[0] >= w[1]) && f.s().iter().all(|&s| s >= 0.0));

        let eye = |k| Mat::<f64>::from_fn(k, k, |i, j| if i == j { 1.0 } else { 0.0 });
        let utu = matmul(&transpose(&u), &u);
        let vtv = matmul(&transpose(&v), &v);
        let err = |a: &Mat<f64>, b: &Mat<f64>| max_abs(&Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] - b[(i, j)]));
        assert!(err(&utu, &eye(p)) <= 1e-10);
        assert!(err(&vtv, &eye(p)) <= 1e-10);

        let us = Mat::from_fn(n, p, |i, j| u[(i, j)] * f.s()[j]);
        let back = matmul(&us, &transpose(&v));
        assert!(err(&back, &x) <= 1e-10 * max_abs(&x).max(1.0));

        for k in 0..p {
            let col = column(&u, k);
            let big = col.iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
            assert!(big > 0.0, "sign convention");
        }
    }
}

#[test]
fn svd_path_matches_gauss_jordan_oracle() {
    let mut r = rng(1);
    for _ in 0..50 {
        let p = r.random_range(3..=50);
        let n = r.random_range(p.max(20)..=200);
        let x = uniform(n, p, &mut r);
        let f = svd_decompose(&features(&x)).unwrap();
        for &l in &DEFAULT_LAMBDAS {
            let oracle = oracle_resolution(&x, l);
            let svd = resolution_matrix_svd(&f, l).unwrap().as_mat().to_owned();
            let direct = resolution_matrix_direct(&features(&x), l).unwrap().as_mat().to_owned();
            assert!(rel_diff(&svd, &oracle) <= 1e-8, "n={n} p={p} λ={l}");
            assert!(rel_diff(&direct, &oracle) <= 1e-8, "n={n} p={p} λ={l}");
        }
    }
}

#[test]
fn grid_sweep_on_one_decomposition() {
    let x = uniform(30, 8, &mut rng(30));
    let f = svd_decompose(&features(&x)).unwrap();
    for &l in &DEFAULT_LAMBDAS {
        let svd = resolution_matrix_svd(&f, l).unwrap().as_mat().to_owned();
        let direct = resolution_matrix_direct(&features(&x), l).unwrap().as_mat().to_owned();
        assert!(rel_diff(&svd, &direct) <= 1e-8);
    }
    let x = uniform(6, 3, &mut rng(6));
    let f = svd_decompose(&features(&x)).unwrap();
    let svd = resolution_matrix_svd(&f, 0.1).unwrap().as_mat().to_owned();
    let direct = resolution_matrix_direct(&features(&x), 0.1).unwrap().as_mat().to_owned();
    assert!(rel_diff(&svd, &direct) <= 1e-10);
}

#[test]
fn planted_coefficients_recovered_without_penalty() {
    let mut r = rng(2);
    let x = uniform(40, 6, &mut r);
    let b = uniform(6, 3, &mut r);
    let y = matmul(&x, &b);
    let f = svd_decompose(&features(&x)).unwrap();
    let w = ridge_weights(&f, &targets(&y), 0.0).unwrap();
    assert!(rel_diff(&w.as_mat().to_owned(), &b) <= 1e-8);
    let m = resolution_matrix_direct(&features(&x), 0.0).unwrap();
    assert!(rel_diff(&fit_weights(&m, &targets(&y)).unwrap().as_mat().to_owned(), &b) <= 1e-8);
}

#[test]
fn single_target_matches_per_target_oracle() {
    let mut r = rng(3);
    let x = uniform(25, 4, &mut r);
    let y = uniform(25, 1, &mut r);
    let f = svd_decompose(&features(&x)).unwrap();
    for l in [0.1, 1.0, 300.0] {
        let w = ridge_weights(&f, &targets(&y), l).unwrap();
        assert!(rel_diff(&w.as_mat().to_owned(), &oracle_weights(&x, &y, l)) <= 1e-10);
    }
}

#[test]
fn column_subsets_are_bit_identical_with_shared_factors() {
    let mut r = rng(4);
    let x = uniform(50, 7, &mut r);
    let y = uniform(50, 9, &mut r);
    let f = svd_decompose(&features(&x)).unwrap();
    let full = ridge_weights(&f, &targets(&y), 200.0).unwrap();
    let pick = [7usize, 0, 4];
    let sub = Mat::from_fn(50, pick.len(), |i, j| y[(i, pick[j])]);
    let part = ridge_weights(&f, &targets(&sub), 200.0).unwrap();
    for (j, &c) in pick.iter().enumerate() {
        for k in 0..7 {
            assert_eq!(part.get(k, j).to_bits(), full.get(k, c).to_bits());
        }
    }

    // perturbing one target leaves every other column untouched
    let mut y2 = y.clone();
    for i in 0..50 {
        y2[(i, 5)] += 1.0;
    }
    let moved = ridge_weights(&f, &targets(&y2), 200.0).unwrap();
    for j in (0..9).filter(|&j| j != 5) {
        for k in 0..7 {
            assert_eq!(moved.get(k, j).to_bits(), full.get(k, j).to_bits());
        }
    }
    assert_ne!(moved.get(0, 5), full.get(0, 5));
}

fn objective(x: &Mat<f64>, y: &[f64], b: &[f64], lambda: f64) -> f64 {
    let mut loss = 0.0;
    for i in 0..x.nrows() {
        let pred: f64 = (0..x.ncols()).map(|k| x[(i, k)] * b[k]).sum();
        loss += (y[i] - pred).powi(2);
    }
    loss + lambda * b.iter().map(|v| v * v).sum::<f64>()
}

#[test]
fn weights_beat_random_perturbations() {
    let mut r = rng(5);
    for inst in 0..10 {
        let x = uniform(30, 5, &mut r);
        let y = uniform(30, 3, &mut r);
        let lambda = DEFAULT_LAMBDAS[inst % DEFAULT_LAMBDAS.len()];
        let w = ridge_weights(&svd_decompose(&features(&x)).unwrap(), &targets(&y), lambda).unwrap();
        for j in 0..3 {
            let b: Vec<f64> = (0..5).map(|k| w.get(k, j)).collect();
            let yj = column(&y, j);
            let best = objective(&x, &yj, &b, lambda);
            for _ in 0..100 {
                let scale = 10f64.powi(r.random_range(-4..=0));
                let moved: Vec<f64> = b.iter().map(|v| v + scale * r.random_range(-1.0..1.0)).collect();
                assert!(objective(&x, &yj, &moved, lambda) >= best);
            }
        }
    }
}

#[test]
fn shrinkage_is_monotone_across_the_grid() {
    let mut r = rng(6);
    for _ in 0..20 {
        let p = r.random_range(3..20);
        let n = r.random_range(p + 5..100);
        let x = uniform(n, p, &mut r);
        let y = uniform(n, 4, &mut r);
        let f = svd_decompose(&features(&x)).unwrap();
        let norms: Vec<f64> = DEFAULT_LAMBDAS
            .iter()
            .map(|&l| ridge_weights(&f, &targets(&y), l).unwrap().frobenius_norm())
            .collect();
        assert!(norms.windows(2).all(|w| w[1] <= w[0]), "{norms:?}");
    }
}

#[test]
fn degenerate_inputs_are_reported() {
    let mut x = uniform(10, 3, &mut rng(7));
    for i in 0..10 {
        x[(i, 2)] = 2.0 * x[(i, 0)];
    }
    let f = svd_decompose(&features(&x)).unwrap();
    assert!(matches!(resolution_matrix_svd(&f, 0.0), Err(Error::RankDeficient { index: 2, .. })));
    assert!(resolution_matrix_svd(&f, 0.1).is_ok());
    match resolution_matrix_direct(&features(&x), 0.0) {
        Err(Error::NumericalFailure { lambda, .. }) => assert_eq!(lambda, 0.0),
        other => panic!("expected a numerical failure, got {other:?}"),
    }
    assert!(matches!(svd_decompose(&features(&uniform(3, 5, &mut rng(8)))), Err(Error::Shape(_))));
    let y = targets(&uniform(4, 2, &mut rng(9)));
    assert!(matches!(fit_weights(&resolution_matrix_svd(&f, 1.0).unwrap(), &y), Err(Error::Shape(_))));
}

#[test]
fn planted_signal_is_predicted_on_held_out_rows() {
    let d = generate_synthetic(&SynthSpec::new(1000, 32, 20).with_seed(21)).unwrap();
    let train: Vec<usize> = (0..900).collect();
    let test: Vec<usize> = (900..1000).collect();
    let f = svd_decompose(&d.x.select_rows(&train)).unwrap();
    let w = ridge_weights(&f, &d.y.select_rows(&train), 1.0).unwrap();
    let yhat = predict(&d.x.select_rows(&test), &w).unwrap();
    let r = pearson_test_score(&yhat, &d.y.select_rows(&test)).unwrap();
    assert!(r.r.iter().all(|&v| v >= 0.3), "{:?}", r.r);
}
