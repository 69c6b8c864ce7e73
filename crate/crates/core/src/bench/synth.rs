//! Planted-signal workloads.

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{FeatureMatrix, TargetMatrix, WeightMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub p: usize,
    pub t: usize,
    /// Per-target variance ratio signal/noise; 0 gives pure noise.
    pub snr: f64,
    pub seed: u64,
    /// Fraction of true weights that are exactly zero.
    pub sparsity: f64,
}

impl SynthSpec {
    pub fn new(n: usize, p: usize, t: usize) -> Self {
        Self { n, p, t, snr: 10.0, seed: 0, sparsity: 0.5 }
    }

    pub fn with_snr(self, snr: f64) -> Self {
        Self { snr, ..self }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn with_targets(self, t: usize) -> Self {
        Self { t, ..self }
    }

    /// Named shapes:
    ///
    /// | name       | n      | p      | t     |
    /// |------------|--------|--------|-------|
    /// | `desk`     | 2000   | 512    | 4096  |
    /// | `mor-desk` | 400    | 64     | 4096  |
    /// | `small`    | 200    | 16     | 64    |
    /// | `parcels`  | 69202  | 16384  | 444   |
    /// | `roi`      | 69202  | 16384  | 6728  |
    pub fn preset(name: &str) -> Option<Self> {
        let (n, p, t) = match name {
            "desk" => (2000, 512, 4096),
            "mor-desk" => (400, 64, 4096),
            "small" => (200, 16, 64),
            "parcels" => (69_202, 16_384, 444),
            "roi" => (69_202, 16_384, 6_728),
            _ => return None,
        };
        Some(Self::new(n, p, t))
    }

    pub const PRESETS: [&'static str; 5] = ["desk", "mor-desk", "small", "parcels", "roi"];

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 || self.t == 0 {
            return Err(Error::Config(format!("synthetic shape must be positive: {}x{}x{}", self.n, self.p, self.t)));
        }
        if !(self.snr >= 0.0 && self.snr.is_finite()) {
            return Err(Error::Config(format!("snr must be finite and >= 0, got {}", self.snr)));
        }
        if !(0.0..=1.0).contains(&self.sparsity) {
            return Err(Error::Config(format!("sparsity must be in [0, 1], got {}", self.sparsity)));
        }
        Ok(())
    }

    /// Best attainable test correlation for a target with nonzero signal.
    pub fn attainable_correlation(&self) -> f64 {
        (self.snr / (1.0 + self.snr)).sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub x: FeatureMatrix,
    pub y: TargetMatrix,
    pub weights: WeightMatrix,
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `Y = X·B + E` with standard-normal `X`, sparse standard-normal `B`, and
/// `E` scaled per target to the requested signal-to-noise ratio.
///
/// Every value comes from fixed-order scalar arithmetic, so a seed produces
/// the same bits on any host.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let SynthSpec { n, p, t, snr, seed, sparsity } = *spec;

    let mut rng = rng_stream(seed, 0);
    let mut x = Mat::<f64>::zeros(n, p);
    for i in 0..n {
        for k in 0..p {
            x[(i, k)] = rng.sample(StandardNormal);
        }
    }

    let mut rng = rng_stream(seed, 1);
    let mut b = Mat::<f64>::zeros(p, t);
    for j in 0..t {
        for k in 0..p {
            let keep = rng.random::<f64>() >= sparsity;
            let w: f64 = rng.sample(StandardNormal);
            if keep {
                b[(k, j)] = w;
            }
        }
    }

    let mut rng = rng_stream(seed, 2);
    let mut y = Mat::<f64>::zeros(n, t);
    let mut noise = vec![0.0; n];
    for j in 0..t {
        let col = y.col_mut(j).try_as_col_major_mut().unwrap().as_slice_mut();
        for k in 0..p {
            let w = b[(k, j)];
            if w != 0.0 {
                let xk = x.col(k).try_as_col_major().unwrap().as_slice();
                for (yi, xi) in col.iter_mut().zip(xk) {
                    *yi += w * xi;
                }
            }
        }
        for e in noise.iter_mut() {
            *e = rng.sample(StandardNormal);
        }
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        if snr == 0.0 || var == 0.0 {
            col.copy_from_slice(&noise);
        } else {
            let sigma = (var / snr).sqrt();
            for (yi, e) in col.iter_mut().zip(&noise) {
                *yi += sigma * e;
            }
        }
    }

    Ok(SynthData {
        x: FeatureMatrix::new(x)?,
        y: TargetMatrix::new(y)?,
        weights: WeightMatrix::new(b)?,
    })
}
