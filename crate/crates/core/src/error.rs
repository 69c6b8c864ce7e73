use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("numerical failure at lambda = {lambda}: {reason}")]
    NumericalFailure { lambda: f64, reason: String },

    #[error("svd did not converge for a {rows}x{cols} matrix")]
    SvdNonConvergence { rows: usize, cols: usize },

    #[error(
        "rank deficiency: singular value {value:e} at index {index} is below tolerance {tolerance:e}; \
         lambda = 0 needs full column rank"
    )]
    RankDeficient { index: usize, value: f64, tolerance: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("matrix format error in field `{field}`: {detail}")]
    Format { field: &'static str, detail: String },

    #[error("matrix size error: expected {expected} payload bytes, found {actual}")]
    Size { expected: u64, actual: u64 },

    #[error("parse error at row {row}{}: {detail}", col.map(|c| format!(", column {c}")).unwrap_or_default())]
    Parse { row: usize, col: Option<usize>, detail: String },

    #[error("{context} {index} failed: {source}")]
    Task { context: &'static str, index: usize, #[source] source: Box<Error> },

    #[error(
        "cross-validation split {split}{} failed: {source}",
        lambda.map(|l| format!(" at lambda = {l}")).unwrap_or_default()
    )]
    Split { split: usize, lambda: Option<f64>, #[source] source: Box<Error> },

    #[error("time budget of {budget_s:.1} s exhausted after {completed} of {total} tasks")]
    Timeout { budget_s: f64, completed: usize, total: usize },

    #[error("worker protocol error: {0}")]
    Protocol(String),

    #[error("worker reported: {0}")]
    Remote(String),

    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, #[source] source: std::io::Error },

    #[error(transparent)]
    Stream(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors that originate in user-supplied configuration rather
    /// than in the data or the numerics.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::Config(_) => true,
            Error::Task { source, .. } | Error::Split { source, .. } => source.is_usage(),
            _ => false,
        }
    }
}
