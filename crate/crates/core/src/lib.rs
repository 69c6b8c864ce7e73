//! Cross-validated multi-target ridge regression with SVD-based λ reuse,
//! three execution strategies (RidgeCV, per-target MOR and batched B-MOR),
//! an analytic cost model and a benchmark harness.

pub mod bench;
pub mod cost;
pub mod dataio;
pub mod error;
pub mod matrix;
pub mod ridge;
pub mod schedulers;
pub mod selection;

pub use error::{Error, Result};
pub use matrix::{FeatureMatrix, TargetMatrix, WeightMatrix};
