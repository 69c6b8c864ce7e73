//! Dense matrix newtypes for the regression problem.
//!
//! All three wrap a column-major [`faer::Mat<f64>`]. Row-major views are only
//! produced at the I/O boundary.

use std::ops::Range;

use faer::{Mat, MatRef};

use crate::error::{Error, Result};

fn check_finite(name: &str, m: MatRef<'_, f64>) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::InvalidData(format!(
                    "{name} has a non-finite entry at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

fn check_nonempty(name: &str, rows: usize, cols: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(Error::Shape(format!("{name} must be at least 1x1, got {rows}x{cols}")));
    }
    Ok(())
}

/// Builds a column-major matrix from row-major values.
pub fn mat_from_row_major(rows: usize, cols: usize, data: &[f64]) -> Result<Mat<f64>> {
    if data.len() != rows * cols {
        return Err(Error::Shape(format!(
            "{rows}x{cols} matrix needs {} values, got {}",
            rows * cols,
            data.len()
        )));
    }
    Ok(Mat::from_fn(rows, cols, |i, j| data[i * cols + j]))
}

pub fn mat_to_row_major(m: MatRef<'_, f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Gathers the listed rows of `m`, in order.
pub fn select_rows(m: MatRef<'_, f64>, rows: &[usize]) -> Mat<f64> {
    Mat::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

pub fn max_abs(m: MatRef<'_, f64>) -> f64 {
    let mut best = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            best = best.max(m[(i, j)].abs());
        }
    }
    best
}

/// `max|a - b| / max(max|b|, tiny)`; the relative max-norm distance used by
/// every equivalence check in this crate.
pub fn rel_max_diff(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut diff = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            diff = diff.max((a[(i, j)] - b[(i, j)]).abs());
        }
    }
    diff / max_abs(b).max(f64::MIN_POSITIVE)
}

fn contiguous(col: faer::ColRef<'_, f64>) -> &[f64] {
    col.try_as_col_major().expect("column-major storage").as_slice()
}

const LANES: usize = 8;
const BLOCK: usize = 4;

fn reduce(acc: &[f64; LANES], tail: f64) -> f64 {
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Dot product with eight interleaved partial sums combined in a fixed order.
/// The result depends only on the two slices, never on the caller's batch.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; LANES];
    let (ca, cb) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    reduce(&acc, tail)
}

/// `dot(a, b[j])` for four columns at once; each result is bit-identical to
/// the single-column call.
fn dot4(a: &[f64], b: [&[f64]; BLOCK]) -> [f64; BLOCK] {
    let mut acc = [[0.0f64; LANES]; BLOCK];
    let full = a.len() / LANES * LANES;
    for at in (0..full).step_by(LANES) {
        let x = &a[at..at + LANES];
        for (j, bj) in b.iter().enumerate() {
            let y = &bj[at..at + LANES];
            for l in 0..LANES {
                acc[j][l] += x[l] * y[l];
            }
        }
    }
    let mut out = [0.0; BLOCK];
    for (j, bj) in b.iter().enumerate() {
        let mut tail = 0.0;
        for i in full..a.len() {
            tail += a[i] * bj[i];
        }
        out[j] = reduce(&acc[j], tail);
    }
    out
}

/// `Aᵀ·B`, one dot product per entry. Column `j` of the result is
/// bit-identical however many columns `B` has.
pub fn mul_transpose_columnwise(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    assert_eq!(a.nrows(), b.nrows());
    let (a, b) = (a.to_owned(), b.to_owned());
    let mut out = Mat::zeros(a.ncols(), b.ncols());
    let mut j = 0;
    while j + BLOCK <= b.ncols() {
        let cols = [0, 1, 2, 3].map(|d| contiguous(b.col(j + d)));
        for k in 0..a.ncols() {
            let r = dot4(contiguous(a.col(k)), cols);
            for d in 0..BLOCK {
                out[(k, j + d)] = r[d];
            }
        }
        j += BLOCK;
    }
    for j in j..b.ncols() {
        for k in 0..a.ncols() {
            out[(k, j)] = dot(contiguous(a.col(k)), contiguous(b.col(j)));
        }
    }
    out
}

/// `A·B` as column updates `out[:, j] += B[k, j]·A[:, k]` in increasing `k`.
/// Column `j` of the result is bit-identical however many columns `B` has.
pub fn mul_columnwise(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    assert_eq!(a.ncols(), b.nrows());
    let a = a.to_owned();
    let mut out = Mat::<f64>::zeros(a.nrows(), b.ncols());
    for j0 in (0..b.ncols()).step_by(BLOCK) {
        let width = BLOCK.min(b.ncols() - j0);
        for k in 0..a.ncols() {
            let src = contiguous(a.col(k));
            for d in 0..width {
                let w = b[(k, j0 + d)];
                if w == 0.0 {
                    continue;
                }
                let dst = out.col_mut(j0 + d).try_as_col_major_mut().unwrap().as_slice_mut();
                for (o, x) in dst.iter_mut().zip(src) {
                    *o += w * x;
                }
            }
        }
    }
    out
}

macro_rules! dense_newtype {
    ($(#[$doc:meta])* $name:ident, $label:literal) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(Mat<f64>);

        impl $name {
            pub fn new(m: Mat<f64>) -> Result<Self> {
                check_nonempty($label, m.nrows(), m.ncols())?;
                check_finite($label, m.as_ref())?;
                Ok(Self(m))
            }

            pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
                Self::new(mat_from_row_major(rows, cols, data)?)
            }

            pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
                Self::new(Mat::zeros(rows, cols))
            }

            #[allow(dead_code)]
            pub(crate) fn from_mat_unchecked(m: Mat<f64>) -> Self {
                Self(m)
            }

            pub fn nrows(&self) -> usize {
                self.0.nrows()
            }

            pub fn ncols(&self) -> usize {
                self.0.ncols()
            }

            pub fn as_mat(&self) -> MatRef<'_, f64> {
                self.0.as_ref()
            }

            pub fn into_mat(self) -> Mat<f64> {
                self.0
            }

            pub fn to_row_major(&self) -> Vec<f64> {
                mat_to_row_major(self.0.as_ref())
            }

            pub fn get(&self, row: usize, col: usize) -> f64 {
                self.0[(row, col)]
            }

            pub fn select_rows(&self, rows: &[usize]) -> Self {
                Self(select_rows(self.0.as_ref(), rows))
            }
        }
    };
}

dense_newtype!(
    /// Stimulus features, `n` time samples by `p` features.
    FeatureMatrix,
    "feature matrix"
);
dense_newtype!(
    /// Responses, `n` time samples by `t` targets.
    TargetMatrix,
    "target matrix"
);
dense_newtype!(
    /// Ridge coefficients, `p` features by `t` targets. Column `j` holds the
    /// weights of target `j`.
    WeightMatrix,
    "weight matrix"
);

impl FeatureMatrix {
    pub fn n(&self) -> usize {
        self.nrows()
    }

    pub fn p(&self) -> usize {
        self.ncols()
    }
}

impl TargetMatrix {
    pub fn t(&self) -> usize {
        self.ncols()
    }

    /// Contiguous block of target columns.
    pub fn columns(&self, range: Range<usize>) -> TargetMatrix {
        TargetMatrix(self.0.as_ref().subcols(range.start, range.len()).to_owned())
    }
}

impl WeightMatrix {
    /// Concatenates weight blocks side by side, in order.
    pub fn hstack(blocks: &[WeightMatrix]) -> Result<WeightMatrix> {
        let Some(first) = blocks.first() else {
            return Err(Error::Shape("cannot stack zero weight blocks".into()));
        };
        let p = first.nrows();
        if let Some(bad) = blocks.iter().find(|b| b.nrows() != p) {
            return Err(Error::Shape(format!(
                "weight blocks disagree on feature count: {p} vs {}",
                bad.nrows()
            )));
        }
        let t: usize = blocks.iter().map(|b| b.ncols()).sum();
        let mut out = Mat::zeros(p, t);
        let mut at = 0;
        for b in blocks {
            out.as_mut().subcols_mut(at, b.ncols()).copy_from(b.as_mat());
            at += b.ncols();
        }
        Ok(WeightMatrix(out))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm_l2()
    }
}
