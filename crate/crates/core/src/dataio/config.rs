//! Run configuration: an optional TOML file overlaid by command-line flags.
//!
//! ```toml
//! strategy = "bmor"
//! c = 4
//! grid = [0.1, 1.0, 100.0]
//! metric = "pearson-mean"
//! seed = 7
//! split = { kind = "k-fold", folds = 5 }
//!
//! [synth]
//! preset = "desk"
//! snr = 10.0
//! ```
//!
//! Exactly one data source is allowed: `features` plus `targets` paths, or a
//! `[synth]` table.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bench::SynthSpec;
use crate::error::{Error, Result};
use crate::schedulers::{Backend, CvSettings, Strategy};
use crate::selection::{HyperParamGrid, Metric, SplitKind, SplitPlan};

/// Synthetic workload description; unset fields come from the preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSource {
    pub preset: Option<String>,
    pub n: Option<usize>,
    pub p: Option<usize>,
    pub t: Option<usize>,
    pub snr: Option<f64>,
    pub sparsity: Option<f64>,
}

impl SynthSource {
    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }

    pub fn resolve(&self, seed: u64) -> Result<SynthSpec> {
        let base = match &self.preset {
            Some(name) => SynthSpec::preset(name).ok_or_else(|| {
                Error::Config(format!("unknown preset `{name}`; known: {}", SynthSpec::PRESETS.join(", ")))
            })?,
            None => match (self.n, self.p, self.t) {
                (Some(n), Some(p), Some(t)) => SynthSpec::new(n, p, t),
                _ => return Err(Error::Config("synthetic data needs a preset or all of n, p and t".into())),
            },
        };
        let spec = SynthSpec {
            n: self.n.unwrap_or(base.n),
            p: self.p.unwrap_or(base.p),
            t: self.t.unwrap_or(base.t),
            snr: self.snr.unwrap_or(base.snr),
            sparsity: self.sparsity.unwrap_or(base.sparsity),
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Files { features: PathBuf, targets: PathBuf },
    Synth(SynthSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub features: Option<PathBuf>,
    pub targets: Option<PathBuf>,
    pub synth: Option<SynthSource>,
    pub strategy: Strategy,
    pub grid: HyperParamGrid,
    pub split: SplitKind,
    pub metric: Metric,
    pub c: usize,
    pub threads_per_worker: usize,
    pub backend: Backend,
    pub global_lambda: bool,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            features: None,
            targets: None,
            synth: None,
            strategy: Strategy::Ridgecv,
            grid: HyperParamGrid::default(),
            split: SplitKind::KFold { folds: 5 },
            metric: Metric::NegMse,
            c: 1,
            threads_per_worker: 1,
            backend: Backend::Threads,
            global_lambda: false,
            seed: 0,
            output: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.c == 0 || self.threads_per_worker == 0 {
            return Err(Error::Config("c and threads_per_worker must be >= 1".into()));
        }
        if let SplitKind::KFold { folds: 0 | 1 } = self.split {
            return Err(Error::Config("k-fold needs at least 2 folds".into()));
        }
        self.source().map(|_| ())
    }

    /// The single configured data source.
    pub fn source(&self) -> Result<DataSource> {
        let synth = self.synth.as_ref().filter(|s| !s.is_empty());
        match (&self.features, &self.targets, synth) {
            (Some(f), Some(t), None) => Ok(DataSource::Files { features: f.clone(), targets: t.clone() }),
            (None, None, Some(s)) => Ok(DataSource::Synth(s.resolve(self.seed)?)),
            (None, None, None) => Err(Error::Config("no data: give features and targets, or a [synth] table".into())),
            (Some(_), None, _) | (None, Some(_), _) => {
                Err(Error::Config("features and targets must be given together".into()))
            }
            (Some(_), Some(_), Some(_)) => {
                Err(Error::Config("give either input files or a [synth] table, not both".into()))
            }
        }
    }

    pub fn plan(&self) -> SplitPlan {
        SplitPlan { kind: self.split, seed: self.seed }
    }

    pub fn settings(&self) -> CvSettings {
        CvSettings { grid: self.grid.clone(), plan: self.plan(), metric: self.metric }
    }
}
