//! Timing harness for jagged operators against their padded equivalents.
//!
//! Every benchmark cross-checks its variants numerically before any timing
//! starts, then attaches the analytic FLOP and byte counts from
//! [`jagged_core::costmodel`].

mod config;
mod record;
mod report;
mod run;

pub use config::{BenchConfig, OutputFormat, Precision, DEFAULT_GRID};
pub use record::{format_checksum, BenchRecord, NOISY_SPREAD};
pub use report::{parse_json, render_cost, render_report, CSV_HEADER};
pub use run::{run_bench, run_op_sweep, run_sweep, variants_for, Variant};

use jagged_core::JaggedError;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Core(#[from] JaggedError),
    #[error("cross-check failed for {op}: {variant} differs from {baseline} by relative error {error:.3e}")]
    CrossCheck {
        op: String,
        variant: String,
        baseline: String,
        error: f64,
    },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("thread pool: {0}")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl BenchError {
    /// Correctness failures as opposed to unusable input.
    pub fn is_correctness(&self) -> bool {
        matches!(self, Self::CrossCheck { .. })
    }
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;
