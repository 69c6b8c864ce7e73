//! Benchmark reports: one JSON document per run, one CSV row per run for
//! sweeps.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::schedulers::{Backend, Strategy};
use crate::selection::{Metric, PhaseTimes, SplitPlan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub n: usize,
    pub p: usize,
    pub t: usize,
    pub r: usize,
    pub strategy: Strategy,
    pub c: usize,
    pub threads_per_worker: usize,
    pub metric: Metric,
    pub grid: Vec<f64>,
    pub plan: SplitPlan,
    pub backend: Backend,
    pub global_lambda: bool,
    pub test_fraction: f64,
    pub snr: Option<f64>,
    pub sparsity: Option<f64>,
    pub shuffled_features: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PearsonSummary {
    pub mean: f64,
    pub max: f64,
    pub min: f64,
    pub constant_targets: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub version: String,
    pub host: String,
}

impl Provenance {
    pub fn current(seed: u64) -> Self {
        let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
        let name = std::env::var("HOSTNAME")
            .ok()
            .or_else(|| std::fs::read_to_string("/etc/hostname").ok())
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| "unknown".into());
        Self {
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            host: format!("{name} ({}-{}, {cpus} cpus)", std::env::consts::OS, std::env::consts::ARCH),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: ReportConfig,
    /// Median of the timed repetitions.
    pub wall_time_s: f64,
    pub wall_times_s: Vec<f64>,
    pub warmup_s: Option<f64>,
    pub phases: PhaseTimes,
    /// Speed-up against the same strategy and worker count on one thread.
    pub su: Option<f64>,
    pub su_ref_s: Option<f64>,
    /// Speed-up against single-worker, single-thread RidgeCV.
    pub dsu: Option<f64>,
    pub dsu_ref_s: Option<f64>,
    pub distinct_lambdas: Vec<f64>,
    pub pearson: PearsonSummary,
    pub provenance: Provenance,
    pub warnings: Vec<String>,
}

impl BenchReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    fn row(&self) -> CsvRow {
        let c = &self.config;
        CsvRow {
            strategy: c.strategy.name(),
            n: c.n,
            p: c.p,
            t: c.t,
            r: c.r,
            c: c.c,
            threads_per_worker: c.threads_per_worker,
            backend: c.backend.name(),
            metric: c.metric.name(),
            global_lambda: c.global_lambda,
            shuffled_features: c.shuffled_features,
            wall_time_s: self.wall_time_s,
            svd_s: self.phases.svd_s,
            sweep_s: self.phases.sweep_s,
            refit_s: self.phases.refit_s,
            su: self.su,
            dsu: self.dsu,
            pearson_mean: self.pearson.mean,
            pearson_max: self.pearson.max,
            seed: self.provenance.seed,
        }
    }
}

#[derive(Serialize)]
struct CsvRow {
    strategy: &'static str,
    n: usize,
    p: usize,
    t: usize,
    r: usize,
    c: usize,
    threads_per_worker: usize,
    backend: &'static str,
    metric: &'static str,
    global_lambda: bool,
    shuffled_features: bool,
    wall_time_s: f64,
    svd_s: f64,
    sweep_s: f64,
    refit_s: f64,
    su: Option<f64>,
    dsu: Option<f64>,
    pearson_mean: f64,
    pearson_max: f64,
    seed: u64,
}

/// Flat CSV with a header row and one row per report.
pub fn write_sweep_csv(out: impl Write, reports: &[BenchReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(r.row()).map_err(|e| crate::Error::Protocol(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
