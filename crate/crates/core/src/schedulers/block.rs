//! One unit of scheduled work: a full or partial CV ridge fit over a
//! contiguous block of target columns.

use std::ops::Range;
use std::time::Instant;

use faer::{Mat, MatRef};

use crate::error::Result;
use crate::ridge::svd_of;
use crate::selection::{
    cv_target_scores, make_splits, HyperParamGrid, Metric, PhaseTimes, SplitPlan, TargetScores,
};

/// Everything a worker needs besides the data to run a block.
#[derive(Debug, Clone, PartialEq)]
pub struct CvSettings {
    pub grid: HyperParamGrid,
    pub plan: SplitPlan,
    pub metric: Metric,
}

impl Default for CvSettings {
    fn default() -> Self {
        Self { grid: HyperParamGrid::default(), plan: SplitPlan::default(), metric: Metric::NegMse }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlockJob {
    /// Cross-validate, pick the block's own λ, refit on all rows.
    Select,
    /// Cross-validate and return the per-target score table only.
    Score,
    /// Refit on all rows at a fixed λ.
    Refit { lambda: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockTask {
    pub id: u64,
    pub cols: Range<usize>,
    pub job: BlockJob,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockOutcome {
    pub id: u64,
    pub scores: Option<TargetScores>,
    pub lambda: Option<f64>,
    pub weights: Option<Mat<f64>>,
    pub phases: PhaseTimes,
}

fn refit(x: MatRef<'_, f64>, y: MatRef<'_, f64>, lambda: f64, phases: &mut PhaseTimes) -> Result<Mat<f64>> {
    let started = Instant::now();
    let factors = svd_of(x)?;
    let proj = factors.project(y)?;
    let w = factors.weights_from_projection(proj.as_ref(), lambda)?;
    phases.refit_s += started.elapsed().as_secs_f64();
    Ok(w)
}

/// Runs one block. Every call decomposes its own training matrices; nothing is
/// shared between blocks.
pub fn run_block(
    id: u64,
    x: MatRef<'_, f64>,
    y_block: MatRef<'_, f64>,
    settings: &CvSettings,
    job: BlockJob,
) -> Result<BlockOutcome> {
    let mut phases = PhaseTimes::default();
    let mut out = BlockOutcome { id, scores: None, lambda: None, weights: None, phases };
    match job {
        BlockJob::Select | BlockJob::Score => {
            let splits = make_splits(x.nrows(), &settings.plan)?;
            let table = cv_target_scores(x, y_block, &settings.grid, &splits, settings.metric, &mut phases)?;
            if job == BlockJob::Select {
                let lambda = table.summarize(&settings.grid).best_lambda;
                out.weights = Some(refit(x, y_block, lambda, &mut phases)?);
                out.lambda = Some(lambda);
            }
            out.scores = Some(table);
        }
        BlockJob::Refit { lambda } => {
            out.weights = Some(refit(x, y_block, lambda, &mut phases)?);
            out.lambda = Some(lambda);
        }
    }
    out.phases = phases;
    Ok(out)
}
