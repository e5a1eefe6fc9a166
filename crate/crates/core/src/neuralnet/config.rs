use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest filter count any block may realize.
pub const MAX_FILTERS: usize = 1024;
pub const ALLOWED_INITIAL_FILTERS: [usize; 4] = [8, 16, 32, 64];
pub const BLOCKS_RANGE: (usize, usize) = (1, 10);
pub const KERNEL_RANGE: (usize, usize) = (3, 50);

/// Hyperparameters of one network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_blocks: usize,
    pub kernel_size: usize,
    pub initial_filters: usize,
    pub learning_rate: f64,
    #[serde(default = "default_dropout")]
    pub dropout_rate: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
}

fn default_dropout() -> f64 {
    0.5
}

fn default_batch_size() -> usize {
    64
}

impl Default for ModelConfig {
    /// The best single configuration found in the original experiments.
    fn default() -> Self {
        Self {
            n_blocks: 7,
            kernel_size: 6,
            initial_filters: 16,
            learning_rate: 5.99e-2,
            dropout_rate: default_dropout(),
            batch_size: default_batch_size(),
        }
    }
}

impl ModelConfig {
    pub fn new(n_blocks: usize, kernel_size: usize, initial_filters: usize, learning_rate: f64) -> Self {
        Self {
            n_blocks,
            kernel_size,
            initial_filters,
            learning_rate,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ConfigOutOfRange(msg));
        if !(BLOCKS_RANGE.0..=BLOCKS_RANGE.1).contains(&self.n_blocks) {
            return bad(format!("n_blocks {} outside {:?}", self.n_blocks, BLOCKS_RANGE));
        }
        if !(KERNEL_RANGE.0..=KERNEL_RANGE.1).contains(&self.kernel_size) {
            return bad(format!("kernel_size {} outside {:?}", self.kernel_size, KERNEL_RANGE));
        }
        if !ALLOWED_INITIAL_FILTERS.contains(&self.initial_filters) {
            return bad(format!(
                "initial_filters {} not one of {:?}",
                self.initial_filters, ALLOWED_INITIAL_FILTERS
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        Ok(())
    }

    /// Filters of block `i` (1-based) = `min(initial * 2^(i-1), 1024)`.
    pub fn block_filters(&self) -> Vec<usize> {
        (0..self.n_blocks)
            .map(|i| {
                self.initial_filters
                    .checked_shl(i as u32)
                    .map_or(MAX_FILTERS, |f| f.min(MAX_FILTERS))
            })
            .collect()
    }

    /// Temporal length after each block for an input of `input_len` samples.
    pub fn block_lengths(&self, input_len: usize) -> Vec<usize> {
        (1..=self.n_blocks).map(|i| input_len >> i).collect()
    }
}
