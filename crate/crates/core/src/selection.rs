//! Cross-validation splits, λ-grid search and scoring.

use std::time::Instant;

use faer::{Mat, MatRef};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{select_rows, FeatureMatrix, TargetMatrix};
use crate::ridge::svd_of;

/// Default regularization candidates.
pub const DEFAULT_LAMBDAS: [f64; 11] =
    [0.1, 1.0, 100.0, 200.0, 300.0, 400.0, 600.0, 800.0, 900.0, 1000.0, 1200.0];

/// Candidate λ values, kept sorted in strictly increasing order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct HyperParamGrid {
    lambdas: Vec<f64>,
}

impl HyperParamGrid {
    /// Accepts the candidates in any order; duplicates are rejected.
    pub fn new(mut lambdas: Vec<f64>) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(Error::Config("lambda grid must not be empty".into()));
        }
        if let Some(bad) = lambdas.iter().find(|l| !l.is_finite() || **l < 0.0) {
            return Err(Error::Config(format!("grid value {bad} is not a finite non-negative number")));
        }
        lambdas.sort_by(f64::total_cmp);
        if let Some(w) = lambdas.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("grid value {} appears twice", w[0])));
        }
        Ok(Self { lambdas })
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Grid size `r`.
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }
}

impl Default for HyperParamGrid {
    fn default() -> Self {
        Self { lambdas: DEFAULT_LAMBDAS.to_vec() }
    }
}

impl TryFrom<Vec<f64>> for HyperParamGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<HyperParamGrid> for Vec<f64> {
    fn from(g: HyperParamGrid) -> Self {
        g.lambdas
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SplitKind {
    KFold { folds: usize },
    LeaveOneOut,
    /// One shuffled train/validation split holding out `fraction` of the rows.
    Holdout { fraction: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub kind: SplitKind,
    pub seed: u64,
}

impl SplitPlan {
    pub fn k_fold(folds: usize, seed: u64) -> Self {
        Self { kind: SplitKind::KFold { folds }, seed }
    }

    pub fn leave_one_out() -> Self {
        Self { kind: SplitKind::LeaveOneOut, seed: 0 }
    }

    pub fn holdout(fraction: f64, seed: u64) -> Self {
        Self { kind: SplitKind::Holdout { fraction }, seed }
    }
}

impl Default for SplitPlan {
    fn default() -> Self {
        Self::k_fold(5, 0)
    }
}

/// Row indices of one train/validation split, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

fn split_from_val(n: usize, mut val: Vec<usize>) -> Split {
    val.sort_unstable();
    let mut in_val = vec![false; n];
    for &i in &val {
        in_val[i] = true;
    }
    let train = (0..n).filter(|&i| !in_val[i]).collect();
    Split { train, val }
}

pub fn make_splits(n: usize, plan: &SplitPlan) -> Result<Vec<Split>> {
    if n < 2 {
        return Err(Error::Config(format!("splitting needs at least 2 rows, got {n}")));
    }
    match plan.kind {
        SplitKind::KFold { folds } => {
            if folds < 2 {
                return Err(Error::Config(format!("k-fold needs at least 2 folds, got {folds}")));
            }
            if folds > n {
                return Err(Error::Config(format!("fold count {folds} exceeds row count {n}")));
            }
            let order = shuffled(n, plan.seed);
            let (base, extra) = (n / folds, n % folds);
            let mut start = 0;
            Ok((0..folds)
                .map(|k| {
                    let len = base + usize::from(k < extra);
                    let val = order[start..start + len].to_vec();
                    start += len;
                    split_from_val(n, val)
                })
                .collect())
        }
        SplitKind::LeaveOneOut => Ok((0..n).map(|i| split_from_val(n, vec![i])).collect()),
        SplitKind::Holdout { fraction } => {
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(Error::Config(format!("holdout fraction must be in (0, 1), got {fraction}")));
            }
            let n_val = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
            let order = shuffled(n, plan.seed);
            Ok(vec![split_from_val(n, order[..n_val].to_vec())])
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// Negative mean squared error.
    #[default]
    NegMse,
    /// Mean over targets of the per-target Pearson correlation.
    PearsonMean,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::NegMse => "neg-mse",
            Metric::PearsonMean => "pearson-mean",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "neg-mse" => Ok(Metric::NegMse),
            "pearson-mean" => Ok(Metric::PearsonMean),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

fn is_constant(col: &[f64], mean: f64) -> bool {
    let scale = col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
    ss <= col.len() as f64 * (f64::EPSILON * scale).powi(2)
}

/// Pearson r of two equal-length columns; `None` when either is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    if is_constant(a, ma) || is_constant(b, mb) {
        return None;
    }
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Per-column scores, plus the indices of columns whose Pearson score was
/// undefined (constant column) and therefore set to 0.
pub(crate) fn column_scores(
    yhat: MatRef<'_, f64>,
    ytrue: MatRef<'_, f64>,
    metric: Metric,
    out: &mut [f64],
) -> Vec<usize> {
    let mut degenerate = Vec::new();
    let mut a = vec![0.0; ytrue.nrows()];
    let mut b = vec![0.0; ytrue.nrows()];
    for j in 0..ytrue.ncols() {
        for i in 0..ytrue.nrows() {
            a[i] = yhat[(i, j)];
            b[i] = ytrue[(i, j)];
        }
        out[j] = match metric {
            Metric::NegMse => {
                -a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
            }
            Metric::PearsonMean => pearson(&a, &b).unwrap_or_else(|| {
                degenerate.push(j);
                0.0
            }),
        };
    }
    degenerate
}

fn check_same_shape(a: &TargetMatrix, b: &TargetMatrix) -> Result<()> {
    if (a.nrows(), a.ncols()) != (b.nrows(), b.ncols()) {
        return Err(Error::Shape(format!(
            "prediction is {}x{} but truth is {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(())
}

/// A score with the list of columns that were degenerate under Pearson.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub value: f64,
    pub constant_columns: Vec<usize>,
}

impl Scored {
    pub fn has_warning(&self) -> bool {
        !self.constant_columns.is_empty()
    }
}

/// Higher is better for both metrics.
pub fn eval_score(yhat: &TargetMatrix, ytrue: &TargetMatrix, metric: Metric) -> Result<Scored> {
    check_same_shape(yhat, ytrue)?;
    let mut per = vec![0.0; ytrue.ncols()];
    let constant_columns = column_scores(yhat.as_mat(), ytrue.as_mat(), metric, &mut per);
    let value = per.iter().sum::<f64>() / per.len() as f64;
    Ok(Scored { value, constant_columns })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PearsonScores {
    pub r: Vec<f64>,
    /// Targets whose true or predicted column was constant; their r is 0.
    pub constant_columns: Vec<usize>,
}

impl PearsonScores {
    pub fn mean(&self) -> f64 {
        self.r.iter().sum::<f64>() / self.r.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.r.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn pearson_test_score(yhat: &TargetMatrix, ytrue: &TargetMatrix) -> Result<PearsonScores> {
    check_same_shape(yhat, ytrue)?;
    if ytrue.nrows() < 3 {
        return Err(Error::Shape(format!(
            "test Pearson needs at least 3 rows, got {}",
            ytrue.nrows()
        )));
    }
    let mut r = vec![0.0; ytrue.ncols()];
    let constant_columns = column_scores(yhat.as_mat(), ytrue.as_mat(), Metric::PearsonMean, &mut r);
    if !constant_columns.is_empty() {
        log::warn!("{} constant target column(s) scored as r = 0", constant_columns.len());
    }
    Ok(PearsonScores { r, constant_columns })
}

/// Wall-clock seconds spent in each phase of a fit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub svd_s: f64,
    pub sweep_s: f64,
    pub refit_s: f64,
}

impl PhaseTimes {
    pub fn add(&mut self, other: &PhaseTimes) {
        self.svd_s += other.svd_s;
        self.sweep_s += other.sweep_s;
        self.refit_s += other.refit_s;
    }
}

/// Cross-validation outcome for one group of targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambdas: Vec<f64>,
    /// `score[split][λ]`, averaged over the group's targets.
    pub score: Vec<Vec<f64>>,
    /// Split-averaged score per λ.
    pub mean_score: Vec<f64>,
    pub best_lambda: f64,
}

/// Per-target validation scores, indexed by (split, λ, target).
#[derive(Debug, Clone, PartialEq)]
pub struct TargetScores {
    splits: usize,
    lambdas: usize,
    width: usize,
    data: Vec<f64>,
}

impl TargetScores {
    pub fn new(splits: usize, lambdas: usize, width: usize) -> Self {
        Self { splits, lambdas, width, data: vec![0.0; splits * lambdas * width] }
    }

    pub fn from_raw(splits: usize, lambdas: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != splits * lambdas * width {
            return Err(Error::Shape(format!(
                "score table {splits}x{lambdas}x{width} needs {} values, got {}",
                splits * lambdas * width,
                data.len()
            )));
        }
        Ok(Self { splits, lambdas, width, data })
    }

    pub fn splits(&self) -> usize {
        self.splits
    }

    pub fn lambdas(&self) -> usize {
        self.lambdas
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn raw(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, split: usize, lambda: usize, target: usize) -> f64 {
        self.data[(split * self.lambdas + lambda) * self.width + target]
    }

    fn row_mut(&mut self, split: usize, lambda: usize) -> &mut [f64] {
        let at = (split * self.lambdas + lambda) * self.width;
        &mut self.data[at..at + self.width]
    }

    /// Joins tables of consecutive target blocks into one table.
    pub fn concat(blocks: &[&TargetScores]) -> Result<TargetScores> {
        let Some(first) = blocks.first() else {
            return Err(Error::Shape("no score tables to join".into()));
        };
        let (s, r) = (first.splits, first.lambdas);
        if blocks.iter().any(|b| b.splits != s || b.lambdas != r) {
            return Err(Error::Shape("score tables disagree on split or grid size".into()));
        }
        let width = blocks.iter().map(|b| b.width).sum();
        let mut out = TargetScores::new(s, r, width);
        for si in 0..s {
            for li in 0..r {
                let row = out.row_mut(si, li);
                let mut at = 0;
                for b in blocks {
                    let start = (si * r + li) * b.width;
                    row[at..at + b.width].copy_from_slice(&b.data[start..start + b.width]);
                    at += b.width;
                }
            }
        }
        Ok(out)
    }

    /// Averages over targets and splits and picks the best λ; ties go to the
    /// smallest λ.
    pub fn summarize(&self, grid: &HyperParamGrid) -> CvResult {
        assert_eq!(grid.len(), self.lambdas);
        let score: Vec<Vec<f64>> = (0..self.splits)
            .map(|s| {
                (0..self.lambdas)
                    .map(|l| {
                        let at = (s * self.lambdas + l) * self.width;
                        self.data[at..at + self.width].iter().sum::<f64>() / self.width as f64
                    })
                    .collect()
            })
            .collect();
        let mean_score: Vec<f64> = (0..self.lambdas)
            .map(|l| score.iter().map(|row| row[l]).sum::<f64>() / self.splits as f64)
            .collect();
        let best_lambda = grid.lambdas()[best_index(&mean_score)];
        CvResult { lambdas: grid.lambdas().to_vec(), score, mean_score, best_lambda }
    }
}

/// Index of the maximum; NaN never wins and the first (smallest-λ) maximum is
/// kept.
fn best_index(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] || scores[best].is_nan() && !s.is_nan() {
            best = i;
        }
    }
    best
}

/// Scores every (split, λ, target) triple. One SVD of the training rows is
/// computed per split and reused for the whole grid.
pub(crate) fn cv_target_scores(
    x: MatRef<'_, f64>,
    y: MatRef<'_, f64>,
    grid: &HyperParamGrid,
    splits: &[Split],
    metric: Metric,
    phases: &mut PhaseTimes,
) -> Result<TargetScores> {
    let mut table = TargetScores::new(splits.len(), grid.len(), y.ncols());
    for (si, split) in splits.iter().enumerate() {
        let wrap = |lambda: Option<f64>| {
            move |e: Error| Error::Split { split: si, lambda, source: Box::new(e) }
        };
        let x_train = select_rows(x, &split.train);
        let y_train = select_rows(y, &split.train);
        let x_val = select_rows(x, &split.val);
        let y_val = select_rows(y, &split.val);

        let started = Instant::now();
        let factors = svd_of(x_train.as_ref()).map_err(wrap(None))?;
        phases.svd_s += started.elapsed().as_secs_f64();

        // Ŷ_val = X_val·V·diag(f_λ)·(Uᵀ·Y_train); both projections are λ-free.
        let started = Instant::now();
        let proj = factors.u().transpose() * &y_train;
        let val_basis = &x_val * factors.v();
        for (li, &lambda) in grid.lambdas().iter().enumerate() {
            let filter = factors.filter(lambda).map_err(wrap(Some(lambda)))?;
            let scaled = Mat::from_fn(proj.nrows(), proj.ncols(), |i, j| filter[i] * proj[(i, j)]);
            let yhat = &val_basis * &scaled;
            column_scores(yhat.as_ref(), y_val.as_ref(), metric, table.row_mut(si, li));
        }
        phases.sweep_s += started.elapsed().as_secs_f64();
    }
    Ok(table)
}

pub fn select_lambda(
    x: &FeatureMatrix,
    y: &TargetMatrix,
    grid: &HyperParamGrid,
    plan: &SplitPlan,
    metric: Metric,
) -> Result<CvResult> {
    if x.nrows() != y.nrows() {
        return Err(Error::Shape(format!(
            "features have {} rows but targets have {}",
            x.nrows(),
            y.nrows()
        )));
    }
    let splits = make_splits(x.nrows(), plan)?;
    let table = cv_target_scores(
        x.as_mat(),
        y.as_mat(),
        grid,
        &splits,
        metric,
        &mut PhaseTimes::default(),
    )?;
    Ok(table.summarize(grid))
}
