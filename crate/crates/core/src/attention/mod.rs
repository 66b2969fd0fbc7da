//! Attention over jagged and padded batches.
//!
//! Four forward implementations compute the same function on the valid
//! region of every sample:
//!
//! | id                       | layout | score storage          |
//! |--------------------------|--------|------------------------|
//! | `dense_attention`        | padded | full `L x L` per sample|
//! | `dense_flash_attention`  | padded | one `bq x bk` tile     |
//! | `jagged_attention`       | jagged | full `Bi x Bi` blocks  |
//! | `jagged_flash_attention` | jagged | one `bq x bk` tile     |
//!
//! Scores are scaled by `1/sqrt(D)`. Empty samples produce zero outputs and a
//! `-inf` log-sum-exp.

mod dense;
mod flash;
mod interaction;
mod jagged;

use std::sync::atomic::{AtomicUsize, Ordering};

pub use dense::{dense_attention, dense_flash_attention};
pub use flash::{
    jagged_flash_attention_backward, jagged_flash_attention_backward_metered,
    jagged_flash_attention_forward, jagged_flash_attention_forward_metered,
};
pub use interaction::feature_interaction;
pub use jagged::{jagged_attention, jagged_attention_vjp};

use crate::tensor::JaggedTensor;

pub const DEFAULT_BLOCK_Q: usize = 64;
pub const DEFAULT_BLOCK_K: usize = 64;

/// State kept by a flash forward for the recomputing backward.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionSaved<T, O = JaggedTensor<T>> {
    pub output: O,
    /// `log sum_k exp(score(r, k))` per query row; `-inf` for rows with no keys.
    pub logsumexp: Vec<T>,
    pub block_q: usize,
    pub block_k: usize,
}

/// Gradients of self-attention with respect to `q`, `k` and `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionGrads<T> {
    pub dq: JaggedTensor<T>,
    pub dk: JaggedTensor<T>,
    pub dv: JaggedTensor<T>,
}

/// Largest scratch working set (in elements) held by any single kernel task.
///
/// Counts the score tile, the output accumulator and the running softmax
/// denominators. Outputs and the saved log-sum-exp are not scratch.
#[derive(Debug, Default)]
pub struct ScratchMeter {
    peak: AtomicUsize,
}

impl ScratchMeter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn peak_elements(&self) -> usize {
        self.peak.load(Ordering::Relaxed)
    }

    pub(crate) fn record(&self, elements: usize) {
        self.peak.fetch_max(elements, Ordering::Relaxed);
    }
}

pub(crate) fn score_scale(dim: usize) -> f64 {
    1.0 / (dim as f64).sqrt()
}
