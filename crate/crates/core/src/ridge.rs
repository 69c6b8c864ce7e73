//! Dense multi-target ridge solvers.
//!
//! Two routes to the resolution matrix `M(λ) = (XᵀX + λI)⁻¹Xᵀ` are provided:
//! a Cholesky solve of the regularized normal equations, and the SVD path
//! `M(λ) = V·diag(sᵢ/(sᵢ² + λ))·Uᵀ`, which reuses one decomposition of `X`
//! across every λ of a grid. Weights are `B = M·Y`.

use faer::{Mat, MatRef, Side};
use faer::linalg::solvers::Solve;

use crate::error::{Error, Result};
use crate::matrix::{mul_columnwise, mul_transpose_columnwise, FeatureMatrix, TargetMatrix, WeightMatrix};

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::Config(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    Ok(())
}

/// Thin SVD `X = U·diag(s)·Vᵀ` of an `n x p` matrix with `n >= p`.
///
/// Singular values are non-increasing. Each column of `U` is oriented so its
/// largest-magnitude entry is positive (the matching column of `V` is flipped
/// with it), which makes the factors deterministic.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    u: Mat<f64>,
    s: Vec<f64>,
    v: Mat<f64>,
}

impl SvdFactors {
    pub fn u(&self) -> MatRef<'_, f64> {
        self.u.as_ref()
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    pub fn v(&self) -> MatRef<'_, f64> {
        self.v.as_ref()
    }

    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn p(&self) -> usize {
        self.v.nrows()
    }

    /// Singular values at or below this are treated as zero.
    pub fn rank_tolerance(&self) -> f64 {
        let s_max = self.s.first().copied().unwrap_or(0.0);
        self.n().max(self.p()) as f64 * f64::EPSILON * s_max
    }

    /// Diagonal ridge filter `sᵢ / (sᵢ² + λ)`.
    pub fn filter(&self, lambda: f64) -> Result<Vec<f64>> {
        check_lambda(lambda)?;
        if lambda == 0.0 {
            let tol = self.rank_tolerance();
            if let Some((index, &value)) = self.s.iter().enumerate().find(|(_, &s)| s <= tol) {
                return Err(Error::RankDeficient { index, value, tolerance: tol });
            }
        }
        Ok(self.s.iter().map(|&s| s / (s * s + lambda)).collect())
    }

    /// `Uᵀ·Y`, the part of every weight computation that does not depend on λ.
    /// Computed column by column, so each output column depends only on the
    /// matching column of `Y`.
    pub fn project(&self, y: MatRef<'_, f64>) -> Result<Mat<f64>> {
        if y.nrows() != self.n() {
            return Err(Error::Shape(format!(
                "targets have {} rows but the decomposition has {}",
                y.nrows(),
                self.n()
            )));
        }
        Ok(mul_transpose_columnwise(self.u.as_ref(), y))
    }

    /// `V·diag(filter)·proj` where `proj = Uᵀ·Y`; equals `M(λ)·Y`.
    pub fn weights_from_projection(&self, proj: MatRef<'_, f64>, lambda: f64) -> Result<Mat<f64>> {
        let f = self.filter(lambda)?;
        let scaled = Mat::from_fn(proj.nrows(), proj.ncols(), |i, j| f[i] * proj[(i, j)]);
        Ok(mul_columnwise(self.v.as_ref(), scaled.as_ref()))
    }
}

pub fn svd_decompose(x: &FeatureMatrix) -> Result<SvdFactors> {
    svd_of(x.as_mat())
}

pub(crate) fn svd_of(x: MatRef<'_, f64>) -> Result<SvdFactors> {
    let (n, p) = (x.nrows(), x.ncols());
    if n < p {
        return Err(Error::Shape(format!(
            "thin SVD path needs n >= p, got n = {n}, p = {p}"
        )));
    }
    let svd = x
        .thin_svd()
        .map_err(|_| Error::SvdNonConvergence { rows: n, cols: p })?;
    let mut u = svd.U().to_owned();
    let mut v = svd.V().to_owned();
    let s_diag = svd.S().column_vector();
    let s: Vec<f64> = (0..p).map(|i| s_diag[i].max(0.0)).collect();
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::SvdNonConvergence { rows: n, cols: p });
    }

    for k in 0..p {
        let mut pivot = 0.0f64;
        for i in 0..n {
            if u[(i, k)].abs() > pivot.abs() {
                pivot = u[(i, k)];
            }
        }
        if pivot < 0.0 {
            for i in 0..n {
                u[(i, k)] = -u[(i, k)];
            }
            for i in 0..p {
                v[(i, k)] = -v[(i, k)];
            }
        }
    }
    Ok(SvdFactors { u, s, v })
}

/// The `p x n` operator mapping targets to weights for one λ.
#[derive(Debug, Clone)]
pub struct ResolutionMatrix {
    m: Mat<f64>,
    lambda: f64,
}

impl ResolutionMatrix {
    pub fn as_mat(&self) -> MatRef<'_, f64> {
        self.m.as_ref()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// `(XᵀX + λI)⁻¹Xᵀ` via a Cholesky factorization of the regularized Gram
/// matrix.
pub fn resolution_matrix_direct(x: &FeatureMatrix, lambda: f64) -> Result<ResolutionMatrix> {
    check_lambda(lambda)?;
    let xm = x.as_mat();
    let (n, p) = (xm.nrows(), xm.ncols());
    let mut gram = xm.transpose() * xm;
    let diag_max = (0..p).map(|i| gram[(i, i)]).fold(0.0f64, f64::max);
    for i in 0..p {
        gram[(i, i)] += lambda;
    }
    let llt = gram.llt(Side::Lower).map_err(|_| Error::NumericalFailure {
        lambda,
        reason: "XᵀX + λI is not positive definite".into(),
    })?;
    let l = llt.L();
    let floor = n.max(p) as f64 * f64::EPSILON * diag_max;
    if let Some(i) = (0..p).find(|&i| l[(i, i)] * l[(i, i)] <= floor) {
        return Err(Error::NumericalFailure {
            lambda,
            reason: format!("XᵀX + λI is numerically singular (pivot {i})"),
        });
    }
    let m = llt.solve(xm.transpose().to_owned());
    Ok(ResolutionMatrix { m, lambda })
}

/// `V·diag(sᵢ/(sᵢ² + λ))·Uᵀ` from an existing decomposition.
pub fn resolution_matrix_svd(f: &SvdFactors, lambda: f64) -> Result<ResolutionMatrix> {
    let filter = f.filter(lambda)?;
    let vf = Mat::from_fn(f.p(), f.p(), |i, j| f.v[(i, j)] * filter[j]);
    let m = &vf * f.u.transpose();
    Ok(ResolutionMatrix { m, lambda })
}

pub fn fit_weights(m: &ResolutionMatrix, y: &TargetMatrix) -> Result<WeightMatrix> {
    if m.m.ncols() != y.nrows() {
        return Err(Error::Shape(format!(
            "resolution matrix has {} columns but targets have {} rows",
            m.m.ncols(),
            y.nrows()
        )));
    }
    Ok(WeightMatrix::from_mat_unchecked(mul_columnwise(m.m.as_ref(), y.as_mat())))
}

/// `Ŷ = X_new·B`.
pub fn predict(x_new: &FeatureMatrix, b: &WeightMatrix) -> Result<TargetMatrix> {
    if x_new.ncols() != b.nrows() {
        return Err(Error::Shape(format!(
            "features have {} columns but weights have {} rows",
            x_new.ncols(),
            b.nrows()
        )));
    }
    Ok(TargetMatrix::from_mat_unchecked(x_new.as_mat() * b.as_mat()))
}

/// Ridge weights for one λ straight from a decomposition: `V·diag(f)·Uᵀ·Y`.
pub fn ridge_weights(f: &SvdFactors, y: &TargetMatrix, lambda: f64) -> Result<WeightMatrix> {
    let proj = f.project(y.as_mat())?;
    Ok(WeightMatrix::from_mat_unchecked(f.weights_from_projection(proj.as_ref(), lambda)?))
}
