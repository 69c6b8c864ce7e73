//! Independent reference implementations used as oracles. Nothing here calls
//! the library's linear algebra: plain nested loops and Gauss-Jordan
//! elimination only.
#![allow(dead_code)]

use faer::Mat;
use mtridge::selection::Split;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(n: usize, p: usize, rng: &mut ChaCha8Rng) -> Mat<f64> {
    Mat::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0))
}

pub fn matmul(a: &Mat<f64>, b: &Mat<f64>) -> Mat<f64> {
    assert_eq!(a.ncols(), b.nrows());
    let mut out = Mat::zeros(a.nrows(), b.ncols());
    for i in 0..a.nrows() {
        for j in 0..b.ncols() {
            let mut s = 0.0;
            for k in 0..a.ncols() {
                s += a[(i, k)] * b[(k, j)];
            }
            out[(i, j)] = s;
        }
    }
    out
}

pub fn transpose(a: &Mat<f64>) -> Mat<f64> {
    Mat::from_fn(a.ncols(), a.nrows(), |i, j| a[(j, i)])
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn inverse(a: &Mat<f64>) -> Option<Mat<f64>> {
    let n = a.nrows();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..2 * n).map(|j| if j < n { a[(i, j)] } else if j - n == i { 1.0 } else { 0.0 }).collect())
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        let d = m[col][col];
        for v in m[col].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for j in 0..2 * n {
                        m[r][j] -= f * m[col][j];
                    }
                }
            }
        }
    }
    Some(Mat::from_fn(n, n, |i, j| m[i][n + j]))
}

/// `(XᵀX + λI)⁻¹Xᵀ` by brute force.
pub fn oracle_resolution(x: &Mat<f64>, lambda: f64) -> Mat<f64> {
    let xt = transpose(x);
    let mut g = matmul(&xt, x);
    for i in 0..g.nrows() {
        g[(i, i)] += lambda;
    }
    matmul(&inverse(&g).expect("regularized Gram matrix is invertible"), &xt)
}

pub fn oracle_weights(x: &Mat<f64>, y: &Mat<f64>, lambda: f64) -> Mat<f64> {
    matmul(&oracle_resolution(x, lambda), y)
}

pub fn rel_diff(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut d = 0.0f64;
    let mut s = 0.0f64;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            d = d.max((a[(i, j)] - b[(i, j)]).abs());
            s = s.max(b[(i, j)].abs());
        }
    }
    d / s.max(f64::MIN_POSITIVE)
}

pub fn rows(m: &Mat<f64>, idx: &[usize]) -> Mat<f64> {
    Mat::from_fn(idx.len(), m.ncols(), |i, j| m[(idx[i], j)])
}

pub fn column(m: &Mat<f64>, j: usize) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, j)]).collect()
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Mean over targets of the score of `yhat` against `ytrue`.
pub fn score(yhat: &Mat<f64>, ytrue: &Mat<f64>, pearson_metric: bool) -> f64 {
    let t = ytrue.ncols();
    if pearson_metric {
        (0..t).map(|j| pearson(&column(yhat, j), &column(ytrue, j))).sum::<f64>() / t as f64
    } else {
        let mut sse = 0.0;
        for i in 0..ytrue.nrows() {
            for j in 0..t {
                sse += (yhat[(i, j)] - ytrue[(i, j)]).powi(2);
            }
        }
        -sse / (ytrue.nrows() * t) as f64
    }
}

/// `table[split][λ]` recomputed from scratch with the direct solver.
pub fn oracle_score_table(
    x: &Mat<f64>,
    y: &Mat<f64>,
    grid: &[f64],
    splits: &[Split],
    pearson_metric: bool,
) -> Vec<Vec<f64>> {
    splits
        .iter()
        .map(|s| {
            let (xt, yt) = (rows(x, &s.train), rows(y, &s.train));
            let (xv, yv) = (rows(x, &s.val), rows(y, &s.val));
            grid.iter()
                .map(|&l| score(&matmul(&xv, &oracle_weights(&xt, &yt, l)), &yv, pearson_metric))
                .collect()
        })
        .collect()
}

/// Best λ from a score table: highest split-mean, first (smallest λ) on ties.
pub fn oracle_best(grid: &[f64], table: &[Vec<f64>]) -> f64 {
    let means: Vec<f64> = (0..grid.len())
        .map(|l| table.iter().map(|row| row[l]).sum::<f64>() / table.len() as f64)
        .collect();
    let mut best = 0;
    for l in 1..grid.len() {
        if means[l] > means[best] {
            best = l;
        }
    }
    grid[best]
}
