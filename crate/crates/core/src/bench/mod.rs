//! Timing orchestration: warm-up plus median-of-N repetitions around the fit
//! call, speed-ups against stored single-thread baselines, and the
//! permutation-null comparison.

pub mod report;
pub mod stats;
pub mod synth;

use std::collections::HashMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use report::{write_sweep_csv, BenchReport, PearsonSummary, Provenance, ReportConfig};
pub use stats::{average_ranks, median, spearman};
pub use synth::{generate_synthetic, SynthData, SynthSpec};

use crate::error::{Error, Result};
use crate::matrix::{FeatureMatrix, TargetMatrix};
use crate::ridge::predict;
use crate::schedulers::{fit, Backend, CvSettings, FitOptions, FitResult, LambdaRecord, Strategy, WorkerPool};
use crate::selection::{make_splits, pearson_test_score, SplitPlan};

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub strategy: Strategy,
    pub settings: CvSettings,
    pub c: usize,
    pub threads_per_worker: usize,
    pub backend: Backend,
    /// Executable used by the process backend.
    pub worker_exe: Option<PathBuf>,
    pub global_lambda: bool,
    pub repetitions: usize,
    pub warmup: bool,
    /// Rows held out for the test Pearson score.
    pub test_fraction: f64,
    /// Seeds the train/test split and the null shuffle.
    pub seed: u64,
    pub time_budget: Option<Duration>,
}

impl BenchConfig {
    pub fn new(strategy: Strategy, c: usize) -> Self {
        Self {
            strategy,
            settings: CvSettings::default(),
            c,
            threads_per_worker: 1,
            backend: Backend::Threads,
            worker_exe: None,
            global_lambda: false,
            repetitions: 3,
            warmup: true,
            test_fraction: 0.1,
            seed: 0,
            time_budget: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions < 3 {
            return Err(Error::Config(format!("need at least 3 timed repetitions, got {}", self.repetitions)));
        }
        if self.c == 0 || self.threads_per_worker == 0 {
            return Err(Error::Config("worker and thread counts must be >= 1".into()));
        }
        if self.backend == Backend::Processes && self.worker_exe.is_none() {
            return Err(Error::Config("process backend needs a worker executable".into()));
        }
        Ok(())
    }

    fn pool(&self) -> Result<WorkerPool> {
        let pool = match self.backend {
            Backend::Threads => WorkerPool::new(self.c, self.threads_per_worker)?,
            Backend::Processes => {
                let exe = self.worker_exe.clone().expect("validated");
                WorkerPool::processes(self.c, self.threads_per_worker, exe)?
            }
        };
        Ok(match self.time_budget {
            Some(b) => pool.with_time_budget(b),
            None => pool,
        })
    }
}

/// Single-thread reference times keyed by configuration family.
#[derive(Debug, Clone, Default)]
pub struct Baselines {
    times: HashMap<(String, Strategy, usize), f64>,
}

impl Baselines {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, family: &str, strategy: Strategy, c: usize, seconds: f64) {
        self.times.insert((family.to_string(), strategy, c), seconds);
    }

    pub fn get(&self, family: &str, strategy: Strategy, c: usize) -> Option<f64> {
        self.times.get(&(family.to_string(), strategy, c)).copied()
    }

    /// Records `report` if it ran with one thread per worker.
    pub fn record(&mut self, report: &BenchReport) {
        let c = &report.config;
        if c.threads_per_worker == 1 {
            self.insert(&family(c), c.strategy, c.c, report.wall_time_s);
        }
    }

    /// Fills SU and DSU from the stored references, or leaves them null with
    /// a warning.
    pub fn apply(&self, report: &mut BenchReport) {
        let cfg = report.config.clone();
        let fam = family(&cfg);
        report.warnings.retain(|w| !w.starts_with("no baseline"));

        report.su_ref_s = self.get(&fam, cfg.strategy, cfg.c);
        report.su = report.su_ref_s.map(|r| r / report.wall_time_s);
        if report.su.is_none() {
            report.warnings.push(format!(
                "no baseline for SU: {} with c = {} on one thread was not run",
                cfg.strategy, cfg.c
            ));
        }

        report.dsu_ref_s = self
            .get(&fam, Strategy::Ridgecv, 1)
            .or_else(|| self.get(&fam, Strategy::Bmor, 1));
        report.dsu = report.dsu_ref_s.map(|r| r / report.wall_time_s);
        if report.dsu.is_none() {
            report.warnings.push("no baseline for DSU: neither ridgecv nor bmor ran with c = 1 on one thread".into());
        }
    }
}

/// Configurations that share a family are timed on the same problem and can
/// be compared.
fn family(c: &ReportConfig) -> String {
    format!(
        "{}x{}x{}|{}|{:?}|{:?}|global={}|shuffled={}",
        c.n, c.p, c.t, c.metric.name(), c.grid, c.plan, c.global_lambda, c.shuffled_features
    )
}

/// What the harness knows about where the data came from.
#[derive(Debug, Clone, Copy, Default)]
pub struct DataOrigin {
    pub snr: Option<f64>,
    pub sparsity: Option<f64>,
    pub shuffled_features: bool,
}

impl From<&SynthSpec> for DataOrigin {
    fn from(s: &SynthSpec) -> Self {
        Self { snr: Some(s.snr), sparsity: Some(s.sparsity), shuffled_features: false }
    }
}

/// A finished benchmark: the report plus the last fit, for callers that
/// need the numerics.
#[derive(Debug, Clone)]
pub struct BenchRun {
    pub report: BenchReport,
    pub fit: FitResult,
}

fn distinct_lambdas(rec: &LambdaRecord) -> Vec<f64> {
    let mut all = match rec {
        LambdaRecord::Single { lambda } => vec![*lambda],
        LambdaRecord::PerBatch { lambdas, .. } | LambdaRecord::PerTarget { lambdas } => lambdas.clone(),
    };
    all.sort_by(f64::total_cmp);
    all.dedup();
    all
}

/// Times `cfg` on `(x, y)`: holds out a test split, optionally runs one
/// discarded warm-up fit, then times `repetitions` fits and reports the
/// median. Speed-ups are left for [`Baselines::apply`].
pub fn run_benchmark_on(
    x: &FeatureMatrix,
    y: &TargetMatrix,
    cfg: &BenchConfig,
    origin: DataOrigin,
) -> Result<BenchRun> {
    cfg.validate()?;
    if x.nrows() != y.nrows() {
        return Err(Error::Shape(format!("features have {} rows but targets have {}", x.nrows(), y.nrows())));
    }
    let split = make_splits(x.nrows(), &SplitPlan::holdout(cfg.test_fraction, cfg.seed))?.remove(0);
    let (x_tr, y_tr) = (x.select_rows(&split.train), y.select_rows(&split.train));
    let (x_te, y_te) = (x.select_rows(&split.val), y.select_rows(&split.val));
    let pool = cfg.pool()?;
    let options = FitOptions { global_lambda: cfg.global_lambda };
    let run = || -> Result<(f64, FitResult)> {
        let started = Instant::now();
        let res = fit(cfg.strategy, &x_tr, &y_tr, &cfg.settings, &pool, options)?;
        Ok((started.elapsed().as_secs_f64(), res))
    };

    let warmup_s = if cfg.warmup { Some(run()?.0) } else { None };
    let mut times = Vec::with_capacity(cfg.repetitions);
    let mut fits = Vec::with_capacity(cfg.repetitions);
    for _ in 0..cfg.repetitions {
        let (secs, res) = run()?;
        log::info!("{} c={} rep {}: {secs:.3}s", cfg.strategy, cfg.c, times.len() + 1);
        times.push(secs);
        fits.push(res);
    }
    let wall_time_s = median(&times);
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let phases = fits[order[order.len() / 2]].phases;
    let fit = fits.pop().expect("at least one repetition");

    let scores = pearson_test_score(&predict(&x_te, &fit.weights)?, &y_te)?;
    let mut warnings = Vec::new();
    if !scores.constant_columns.is_empty() {
        warnings.push(format!("{} constant test target(s) scored as r = 0", scores.constant_columns.len()));
    }
    let report = BenchReport {
        config: ReportConfig {
            n: x.nrows(),
            p: x.ncols(),
            t: y.ncols(),
            r: cfg.settings.grid.len(),
            strategy: cfg.strategy,
            c: cfg.c,
            threads_per_worker: cfg.threads_per_worker,
            metric: cfg.settings.metric,
            grid: cfg.settings.grid.lambdas().to_vec(),
            plan: cfg.settings.plan,
            backend: cfg.backend,
            global_lambda: cfg.global_lambda,
            test_fraction: cfg.test_fraction,
            snr: origin.snr,
            sparsity: origin.sparsity,
            shuffled_features: origin.shuffled_features,
        },
        wall_time_s,
        wall_times_s: times,
        warmup_s,
        phases,
        su: None,
        su_ref_s: None,
        dsu: None,
        dsu_ref_s: None,
        distinct_lambdas: distinct_lambdas(&fit.lambdas),
        pearson: PearsonSummary {
            mean: scores.mean(),
            max: scores.max(),
            min: scores.r.iter().copied().fold(f64::INFINITY, f64::min),
            constant_targets: scores.constant_columns.len(),
        },
        provenance: Provenance::current(cfg.seed),
        warnings,
    };
    Ok(BenchRun { report, fit })
}

/// Generates the workload, runs it, records it as a baseline when it
/// qualifies and fills in its speed-ups.
pub fn run_benchmark(spec: &SynthSpec, cfg: &BenchConfig, baselines: &mut Baselines) -> Result<BenchReport> {
    let data = generate_synthetic(spec)?;
    let mut report = run_benchmark_on(&data.x, &data.y, cfg, spec.into())?.report;
    baselines.record(&report);
    baselines.apply(&mut report);
    Ok(report)
}

/// Runs every configuration on one generated workload, then fills speed-ups
/// once all baselines are known, so their order within the sweep does not
/// matter.
pub fn run_sweep(spec: &SynthSpec, configs: &[BenchConfig], baselines: &mut Baselines) -> Result<Vec<BenchReport>> {
    let data = generate_synthetic(spec)?;
    let mut reports = Vec::with_capacity(configs.len());
    for cfg in configs {
        let report = run_benchmark_on(&data.x, &data.y, cfg, spec.into())?.report;
        baselines.record(&report);
        reports.push(report);
    }
    for r in &mut reports {
        baselines.apply(r);
    }
    Ok(reports)
}

/// Fits once on aligned data and once with the rows of `X` permuted, using
/// the same train/test split. `perm` defaults to a shuffle seeded from the
/// config seed.
pub fn permutation_null(
    x: &FeatureMatrix,
    y: &TargetMatrix,
    cfg: &BenchConfig,
    origin: DataOrigin,
    perm: Option<Vec<usize>>,
) -> Result<(BenchRun, BenchRun)> {
    let perm = match perm {
        Some(p) => {
            let mut seen = vec![false; x.nrows()];
            if p.len() != x.nrows() || p.iter().any(|&i| i >= seen.len() || std::mem::replace(&mut seen[i], true)) {
                return Err(Error::Config(format!("row permutation must be a permutation of 0..{}", x.nrows())));
            }
            p
        }
        None => {
            let mut p: Vec<usize> = (0..x.nrows()).collect();
            p.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_5ca7));
            p
        }
    };
    let aligned = run_benchmark_on(x, y, cfg, DataOrigin { shuffled_features: false, ..origin })?;
    let shuffled_x = x.select_rows(&perm);
    let shuffled = run_benchmark_on(&shuffled_x, y, cfg, DataOrigin { shuffled_features: true, ..origin })?;
    Ok((aligned, shuffled))
}
