//! Execution strategies for cross-validated multi-target ridge.
//!
//! * `ridgecv`: one fit over all targets with a single shared λ.
//! * `mor`: one independent fit per target, each redoing its own SVDs.
//! * `bmor`: targets cut into `min(t, c)` contiguous batches, one independent
//!   fit (and one set of SVDs) per batch, each choosing its own λ.
//!
//! With `global_lambda` set, `mor` and `bmor` first collect per-target
//! validation scores from every task, pick one λ over all targets exactly as
//! `ridgecv` does, then run a refit round at that λ.

mod block;
mod partition;
mod pool;
pub mod wire;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use block::{run_block, BlockJob, BlockOutcome, BlockTask, CvSettings};
pub use partition::{partition_targets, BatchPartition};
pub use pool::{par_for, serve_worker, Backend, WorkerPool};

use crate::error::{Error, Result};
use crate::matrix::{FeatureMatrix, TargetMatrix, WeightMatrix};
use crate::selection::{CvResult, PhaseTimes, TargetScores};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Ridgecv,
    Mor,
    Bmor,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Ridgecv, Strategy::Mor, Strategy::Bmor];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Ridgecv => "ridgecv",
            Strategy::Mor => "mor",
            Strategy::Bmor => "bmor",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ridgecv" => Ok(Strategy::Ridgecv),
            "mor" => Ok(Strategy::Mor),
            "bmor" => Ok(Strategy::Bmor),
            other => Err(Error::Config(format!("unknown strategy `{other}`"))),
        }
    }
}

/// Which λ each target was fitted with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "granularity", rename_all = "kebab-case")]
pub enum LambdaRecord {
    Single { lambda: f64 },
    PerBatch { boundaries: Vec<usize>, lambdas: Vec<f64> },
    PerTarget { lambdas: Vec<f64> },
}

impl LambdaRecord {
    pub fn len(&self) -> usize {
        match self {
            LambdaRecord::Single { .. } => 1,
            LambdaRecord::PerBatch { lambdas, .. } | LambdaRecord::PerTarget { lambdas } => lambdas.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// λ used for target column `j`.
    pub fn for_target(&self, j: usize) -> f64 {
        match self {
            LambdaRecord::Single { lambda } => *lambda,
            LambdaRecord::PerTarget { lambdas } => lambdas[j],
            LambdaRecord::PerBatch { boundaries, lambdas } => {
                let i = boundaries.partition_point(|&b| b <= j) - 1;
                lambdas[i]
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FitOptions {
    /// Select one λ over all targets for `mor` and `bmor`.
    pub global_lambda: bool,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub strategy: Strategy,
    pub weights: WeightMatrix,
    pub lambdas: LambdaRecord,
    /// One entry per λ decision: a single global result, or one per batch or
    /// target.
    pub cv: Vec<CvResult>,
    pub wall_time_s: f64,
    /// Per-phase seconds summed over all tasks.
    pub phases: PhaseTimes,
    pub workers: usize,
    pub threads_per_worker: usize,
}

/// JSON view of a [`FitResult`]; weights are stored separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub strategy: Strategy,
    pub p: usize,
    pub t: usize,
    pub lambdas: LambdaRecord,
    pub cv: Vec<CvResult>,
    pub wall_time_s: f64,
    pub phases: PhaseTimes,
    pub workers: usize,
    pub threads_per_worker: usize,
}

impl FitResult {
    pub fn summary(&self) -> FitSummary {
        FitSummary {
            strategy: self.strategy,
            p: self.weights.nrows(),
            t: self.weights.ncols(),
            lambdas: self.lambdas.clone(),
            cv: self.cv.clone(),
            wall_time_s: self.wall_time_s,
            phases: self.phases,
            workers: self.workers,
            threads_per_worker: self.threads_per_worker,
        }
    }
}

fn check_inputs(x: &FeatureMatrix, y: &TargetMatrix) -> Result<()> {
    if x.nrows() != y.nrows() {
        return Err(Error::Shape(format!(
            "features have {} rows but targets have {}",
            x.nrows(),
            y.nrows()
        )));
    }
    Ok(())
}

fn sum_phases(outs: &[BlockOutcome]) -> PhaseTimes {
    let mut total = PhaseTimes::default();
    for o in outs {
        total.add(&o.phases);
    }
    total
}

fn stack_weights(outs: &mut [BlockOutcome]) -> Result<WeightMatrix> {
    let blocks = outs
        .iter_mut()
        .map(|o| {
            o.weights
                .take()
                .ok_or_else(|| Error::Protocol(format!("task {} returned no weights", o.id)))
                .and_then(WeightMatrix::new)
        })
        .collect::<Result<Vec<_>>>()?;
    WeightMatrix::hstack(&blocks)
}

fn score_table(o: &BlockOutcome) -> Result<&TargetScores> {
    o.scores
        .as_ref()
        .ok_or_else(|| Error::Protocol(format!("task {} returned no scores", o.id)))
}

/// Single-process RidgeCV: one λ for all targets, refit on every row.
pub fn fit_ridgecv(x: &FeatureMatrix, y: &TargetMatrix, settings: &CvSettings, pool: &WorkerPool) -> Result<FitResult> {
    check_inputs(x, y)?;
    let started = Instant::now();
    pool.apply_thread_budget(1);
    let mut out = run_block(0, x.as_mat(), y.as_mat(), settings, BlockJob::Select)?;
    let cv = score_table(&out)?.summarize(&settings.grid);
    let weights = stack_weights(std::slice::from_mut(&mut out))?;
    Ok(FitResult {
        strategy: Strategy::Ridgecv,
        weights,
        lambdas: LambdaRecord::Single { lambda: cv.best_lambda },
        cv: vec![cv],
        wall_time_s: started.elapsed().as_secs_f64(),
        phases: out.phases,
        workers: 1,
        threads_per_worker: pool.threads_per_worker(),
    })
}

/// Cuts targets into column ranges and runs them on the pool, either with
/// per-range λ selection or with one global selection round followed by a
/// refit round.
fn fit_ranges(
    x: &FeatureMatrix,
    y: &TargetMatrix,
    settings: &CvSettings,
    pool: &WorkerPool,
    ranges: &[std::ops::Range<usize>],
    global_lambda: bool,
    label: &'static str,
) -> Result<(WeightMatrix, Vec<f64>, Vec<CvResult>, PhaseTimes)> {
    let tasks = |job: BlockJob| -> Vec<BlockTask> {
        ranges
            .iter()
            .enumerate()
            .map(|(i, r)| BlockTask { id: i as u64, cols: r.clone(), job })
            .collect()
    };
    if !global_lambda {
        let mut outs = pool.execute(x, y, settings, &tasks(BlockJob::Select), label)?;
        let cv = outs
            .iter()
            .map(|o| score_table(o).map(|s| s.summarize(&settings.grid)))
            .collect::<Result<Vec<_>>>()?;
        let lambdas = cv.iter().map(|c| c.best_lambda).collect();
        let phases = sum_phases(&outs);
        let weights = stack_weights(&mut outs)?;
        return Ok((weights, lambdas, cv, phases));
    }

    let scored = pool.execute(x, y, settings, &tasks(BlockJob::Score), label)?;
    let tables = scored.iter().map(score_table).collect::<Result<Vec<_>>>()?;
    let cv = TargetScores::concat(&tables)?.summarize(&settings.grid);
    let lambda = cv.best_lambda;
    let mut refit = pool.execute(x, y, settings, &tasks(BlockJob::Refit { lambda }), label)?;
    let mut phases = sum_phases(&scored);
    phases.add(&sum_phases(&refit));
    let weights = stack_weights(&mut refit)?;
    Ok((weights, vec![lambda; ranges.len()], vec![cv], phases))
}

/// One independent single-target fit per column.
pub fn fit_mor(
    x: &FeatureMatrix,
    y: &TargetMatrix,
    settings: &CvSettings,
    pool: &WorkerPool,
    options: FitOptions,
) -> Result<FitResult> {
    check_inputs(x, y)?;
    let started = Instant::now();
    let ranges: Vec<_> = (0..y.ncols()).map(|j| j..j + 1).collect();
    let (weights, lambdas, cv, phases) =
        fit_ranges(x, y, settings, pool, &ranges, options.global_lambda, "target")?;
    Ok(FitResult {
        strategy: Strategy::Mor,
        weights,
        lambdas: LambdaRecord::PerTarget { lambdas },
        cv,
        wall_time_s: started.elapsed().as_secs_f64(),
        phases,
        workers: pool.workers(),
        threads_per_worker: pool.threads_per_worker(),
    })
}

/// Batch multi-output regression: `min(t, c)` contiguous batches, each an
/// independent cross-validated fit.
pub fn fit_bmor(
    x: &FeatureMatrix,
    y: &TargetMatrix,
    settings: &CvSettings,
    pool: &WorkerPool,
    options: FitOptions,
) -> Result<FitResult> {
    check_inputs(x, y)?;
    let started = Instant::now();
    let partition = partition_targets(y.ncols(), pool.workers());
    let ranges: Vec<_> = partition.batches().collect();
    let (weights, lambdas, cv, phases) =
        fit_ranges(x, y, settings, pool, &ranges, options.global_lambda, "batch")?;
    Ok(FitResult {
        strategy: Strategy::Bmor,
        weights,
        lambdas: LambdaRecord::PerBatch { boundaries: partition.boundaries().to_vec(), lambdas },
        cv,
        wall_time_s: started.elapsed().as_secs_f64(),
        phases,
        workers: pool.workers(),
        threads_per_worker: pool.threads_per_worker(),
    })
}

pub fn fit(
    strategy: Strategy,
    x: &FeatureMatrix,
    y: &TargetMatrix,
    settings: &CvSettings,
    pool: &WorkerPool,
    options: FitOptions,
) -> Result<FitResult> {
    match strategy {
        Strategy::Ridgecv => fit_ridgecv(x, y, settings, pool),
        Strategy::Mor => fit_mor(x, y, settings, pool, options),
        Strategy::Bmor => fit_bmor(x, y, settings, pool, options),
    }
}

/// `t_ref / t_par`.
pub fn compute_speedup(t_ref: f64, t_par: f64) -> Result<f64> {
    if !(t_ref > 0.0 && t_par > 0.0) || !t_ref.is_finite() || !t_par.is_finite() {
        return Err(Error::Config(format!(
            "speedup needs positive finite times, got {t_ref} and {t_par}"
        )));
    }
    Ok(t_ref / t_par)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn speedup_definition() {
        assert_eq!(compute_speedup(100.0, 25.0).unwrap(), 4.0);
        assert_eq!(compute_speedup(3.5, 3.5).unwrap(), 1.0);
        assert!(compute_speedup(0.0, 1.0).is_err());
        assert!(compute_speedup(1.0, -1.0).is_err());
    }

    #[test]
    fn lambda_record_lookup() {
        let r = LambdaRecord::PerBatch { boundaries: vec![0, 2, 5], lambdas: vec![1.0, 100.0] };
        assert_eq!((r.for_target(0), r.for_target(1), r.for_target(2), r.for_target(4)), (1.0, 1.0, 100.0, 100.0));
        assert_eq!(r.len(), 2);
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
    }
}
