//! Jagged operators: the per-segment matrix products, segment softmaxes and
//! the shared-weight MLP, each with a backward (vector-Jacobian product).
//!
//! Kernels parallelize across samples; within a sample every output element
//! is produced by one task with a fixed reduction order, so results do not
//! depend on the thread count.

mod bmm;
pub(crate) mod gemm;
mod mlp;
pub mod padded;
mod softmax;

pub use bmm::{
    array_jagged_bmm_jagged_out, array_jagged_bmm_jagged_out_blocked, array_jagged_bmm_jagged_out_vjp,
    jagged_dense_bmm, jagged_dense_bmm_blocked, jagged_dense_bmm_vjp, jagged_jagged_bmm,
    jagged_jagged_bmm_blocked, jagged_jagged_bmm_jagged_out, jagged_jagged_bmm_jagged_out_blocked,
    jagged_jagged_bmm_jagged_out_vjp, jagged_jagged_bmm_vjp,
};
pub use mlp::{jagged_mlp, jagged_mlp_blocked, jagged_mlp_vjp, Activation, MlpGrads, MlpLayer};
pub use softmax::{jagged2_softmax, jagged2_softmax_vjp, jagged_softmax, jagged_softmax_vjp};

/// Default tile edge (rows) for the blocked kernels.
pub const DEFAULT_BLOCK: usize = 64;
