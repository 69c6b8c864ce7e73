use std::ops::Range;

use serde::{Deserialize, Serialize};

/// Contiguous split of `t` target columns into `min(t, c)` near-equal batches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPartition {
    boundaries: Vec<usize>,
}

impl BatchPartition {
    /// `n_batches + 1` column indices, from 0 to `t`.
    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn n_batches(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn batch(&self, i: usize) -> Range<usize> {
        self.boundaries[i]..self.boundaries[i + 1]
    }

    pub fn batches(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        self.boundaries.windows(2).map(|w| w[0]..w[1])
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.batches().map(|r| r.len()).collect()
    }
}

/// Boundary `i` is `floor(i·t / min(t, c))`. Both counts must be at least 1.
pub fn partition_targets(t: usize, c: usize) -> BatchPartition {
    assert!(t >= 1 && c >= 1, "partition_targets needs t >= 1 and c >= 1");
    let n = t.min(c);
    let boundaries = (0..=n)
        .map(|i| ((i as u128 * t as u128) / n as u128) as usize)
        .collect();
    BatchPartition { boundaries }
}
