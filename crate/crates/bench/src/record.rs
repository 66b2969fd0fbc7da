use jagged_core::{LengthKind, OpId};
use serde::{Deserialize, Serialize};

use crate::config::Precision;

/// Records whose p90/p10 spread exceeds this are flagged noisy.
pub const NOISY_SPREAD: f64 = 3.0;

/// One timed variant of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    /// Operator actually executed by this variant.
    pub op: OpId,
    /// `padded` / `jagged` for kernels; `dense`, `dense_flash`, `jagged`, `jagged_flash` for attention.
    pub variant: String,
    pub batch: usize,
    pub dim: usize,
    pub t: usize,
    pub max_len: usize,
    pub dist: LengthKind,
    pub seed: u64,
    pub precision: Precision,
    pub threads: usize,
    pub iters: usize,
    pub warmup: usize,
    pub block_q: usize,
    pub block_k: usize,
    pub time_us_p50: f64,
    pub time_us_p10: f64,
    pub time_us_p90: f64,
    pub flops: u64,
    pub bytes: u64,
    /// Baseline time over this variant's time.
    pub speedup_vs_dense: f64,
    /// Baseline bytes over this variant's bytes.
    pub bytes_ratio_vs_dense: f64,
    /// Baseline FLOPs over this variant's FLOPs.
    pub flops_ratio_vs_dense: f64,
    /// Sum of all output values in `f64`.
    pub checksum: f64,
    pub noisy: bool,
}

/// Checksums are printed with 17 significant digits.
pub fn format_checksum(x: f64) -> String {
    format!("{x:.16e}")
}
