mod common;

use common::*;
use faer::Mat;
use mtridge::cost::{estimate_costs, predict_ranking, Calibration, ProblemShape};
use mtridge::dataio::{decode_matrix, encode_matrix, parse_csv_matrix, write_csv_matrix};
use mtridge::schedulers::{partition_targets, Strategy};
use mtridge::selection::{pearson_test_score, select_lambda, HyperParamGrid, Metric, SplitPlan, DEFAULT_LAMBDAS};
use mtridge::{Error, FeatureMatrix, TargetMatrix};
use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn encode(m: &Mat<f64>) -> Vec<u8> {
    let mut out = Vec::new();
    encode_matrix(m.as_ref(), &mut out);
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn partition_laws(t in 1usize..5000, c in 1usize..300) {
        let part = partition_targets(t, c);
        let b = part.boundaries();
        prop_assert_eq!(part.n_batches(), t.min(c));
        prop_assert_eq!(b[0], 0);
        prop_assert_eq!(*b.last().unwrap(), t);
        prop_assert!(b.windows(2).all(|w| w[0] < w[1]));
        let sizes = part.sizes();
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        prop_assert!(hi - lo <= 1);
        prop_assert_eq!(sizes.iter().sum::<usize>(), t);
        for (i, r) in part.batches().enumerate() {
            prop_assert_eq!(r.start, i * t / part.n_batches());
        }
    }

    #[test]
    fn gap_identity_is_exact(p in 1u64..5000, extra in 0u64..100_000, t in 1u64..100_000, r in 1u64..50, c in 1u64..1000) {
        let shape = ProblemShape::new(p + extra, p, t, r, c).unwrap();
        let e = estimate_costs(&shape).unwrap();
        let ratio = BigRational::new(BigInt::from(t), BigInt::from(c)) - BigRational::from_integer(BigInt::from(1));
        prop_assert_eq!(&e.t_mor - &e.t_bmor, ratio * &e.t_m);
        prop_assert_eq!(&e.t_ridge, &(&e.t_m + &e.t_w));
    }

    #[test]
    fn cost_monotone_in_workers(p in 1u64..2000, extra in 0u64..10_000, t in 1u64..10_000, c in 1u64..500) {
        let s = ProblemShape::new(p + extra, p, t, 11, c).unwrap();
        let (a, b) = (estimate_costs(&s).unwrap(), estimate_costs(&s.with_c(c + 1)).unwrap());
        prop_assert!(b.t_bmor <= a.t_bmor);
        prop_assert!(b.t_mor <= a.t_mor);
        prop_assert_eq!(&a.t_ridge, &b.t_ridge);
        if t > c { prop_assert!(a.t_mor >= a.t_bmor); }
        if c > 1 { prop_assert!(a.t_bmor <= a.t_ridge); }
    }

    #[test]
    fn ranking_ignores_calibration_scale(p in 1u64..500, t in 1u64..5000, c in 1u64..64, k in 1e-12f64..1e-6, m in 1.0f64..1e3) {
        let s = ProblemShape::new(4 * p, p, t, 11, c).unwrap();
        let e = estimate_costs(&s).unwrap();
        let order = |cal: &Calibration| {
            let mut v = Strategy::ALL.to_vec();
            v.sort_by(|a, b| cal.predict_seconds(&e, *a).total_cmp(&cal.predict_seconds(&e, *b)).then(a.cmp(b)));
            v
        };
        let base = Calibration { seconds_per_op: k, residuals: vec![] };
        let scaled = Calibration { seconds_per_op: k * m, residuals: vec![] };
        prop_assert_eq!(order(&base), order(&scaled));
        let flat: Vec<Strategy> = predict_ranking(&s).unwrap().into_iter().flatten().collect();
        prop_assert_eq!(flat, order(&base));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn matrix_file_round_trip_is_bit_exact(rows in 1usize..40, cols in 1usize..40, bits in prop::collection::vec(any::<u64>(), 1600)) {
        let m = Mat::from_fn(rows, cols, |i, j| f64::from_bits(bits[i * cols + j]));
        let bytes = encode(&m);
        prop_assert_eq!(bytes.len(), 25 + rows * cols * 8);
        let back = decode_matrix(&bytes).unwrap();
        prop_assert_eq!((back.nrows(), back.ncols()), (rows, cols));
        for i in 0..rows {
            for j in 0..cols {
                prop_assert_eq!(back[(i, j)].to_bits(), m[(i, j)].to_bits());
            }
        }
    }

    #[test]
    fn corrupt_files_are_rejected(rows in 1usize..10, cols in 1usize..10, cut in 0usize..1000, flip in 0usize..25) {
        let m = Mat::from_fn(rows, cols, |i, j| (i * cols + j) as f64);
        let bytes = encode(&m);
        let cut = cut % bytes.len();
        prop_assert!(decode_matrix(&bytes[..cut]).is_err());
        let mut longer = bytes.clone();
        longer.push(0);
        let size_err = matches!(decode_matrix(&longer), Err(Error::Size { .. }));
        prop_assert!(size_err);
        // any change to magic, version or dtype is a format error
        if flip < 9 {
            let mut bad = bytes.clone();
            bad[flip] ^= 0x40;
            let format_err = matches!(decode_matrix(&bad), Err(Error::Format { .. }));
            prop_assert!(format_err);
        }
    }

    #[test]
    fn csv_binary_csv_preserves_values(rows in 1usize..12, cols in 1usize..12, vals in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 144)) {
        let m = Mat::from_fn(rows, cols, |i, j| vals[i * cols + j]);
        let mut text = Vec::new();
        write_csv_matrix(&mut text, m.as_ref()).unwrap();
        let parsed = parse_csv_matrix(text.as_slice()).unwrap();
        let back = decode_matrix(&encode(&parsed)).unwrap();
        let mut again = Vec::new();
        write_csv_matrix(&mut again, back.as_ref()).unwrap();
        prop_assert_eq!(&text, &again);
        for i in 0..rows {
            for j in 0..cols {
                prop_assert_eq!(back[(i, j)].to_bits(), m[(i, j)].to_bits());
            }
        }
    }

    #[test]
    fn pearson_is_affine_invariant(seed in any::<u64>(), a in 0.01f64..100.0, b in -50.0f64..50.0) {
        let mut r = rng(seed);
        let yhat = uniform(30, 4, &mut r);
        let y = TargetMatrix::new(uniform(30, 4, &mut r)).unwrap();
        let moved = TargetMatrix::new(Mat::from_fn(30, 4, |i, j| a * yhat[(i, j)] + b)).unwrap();
        let r0 = pearson_test_score(&TargetMatrix::new(yhat).unwrap(), &y).unwrap().r;
        let r1 = pearson_test_score(&moved, &y).unwrap().r;
        for (u, v) in r0.iter().zip(&r1) {
            prop_assert!((u - v).abs() <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(30))]

    #[test]
    fn best_lambda_ignores_grid_order(seed in any::<u64>(), pearson in any::<bool>()) {
        let mut r = rng(seed);
        let x = FeatureMatrix::new(uniform(40, 5, &mut r)).unwrap();
        let y = TargetMatrix::new(uniform(40, 3, &mut r)).unwrap();
        let metric = if pearson { Metric::PearsonMean } else { Metric::NegMse };
        let plan = SplitPlan::k_fold(4, seed);
        let base = select_lambda(&x, &y, &HyperParamGrid::default(), &plan, metric).unwrap();
        let mut shuffled = DEFAULT_LAMBDAS.to_vec();
        shuffled.shuffle(&mut r);
        let other = select_lambda(&x, &y, &HyperParamGrid::new(shuffled).unwrap(), &plan, metric).unwrap();
        prop_assert_eq!(base.best_lambda, other.best_lambda);
    }
}
