//! Jagged tensor operators for variable-length batches.
//!
//! A batch of variable-length sequences is stored without padding as one
//! value buffer plus an offsets array ([`JaggedTensor`]). On top of that
//! layout the crate provides:
//!
//! * conversions to and from padded dense form, and elementwise ops ([`tensor`]);
//! * per-segment matrix products, segment softmaxes and a shared-weight MLP,
//!   each with a backward pass ([`linalg`]);
//! * dense, dense-flash, jagged and jagged-flash attention, with a recomputing
//!   flash backward, plus target/feature cross-attention ([`attention`]);
//! * analytic FLOP and byte counts for jagged versus padded execution ([`costmodel`]);
//! * finite-difference gradient checking ([`gradcheck`]) and oracle suites ([`verify`]).
//!
//! Kernels are generic over [`Scalar`] (`f32` or `f64`) and accumulate in `f64`.

pub mod attention;
pub mod costmodel;
mod error;
pub mod gradcheck;
pub mod lengths;
pub mod linalg;
pub mod ops;
mod scalar;
pub mod tensor;
pub mod verify;

pub use attention::{AttentionGrads, AttentionSaved, ScratchMeter};
pub use error::{JaggedError, Result};
pub use lengths::{gen_lengths, LengthDistribution, LengthKind};
pub use ops::{AnyTensor, Blocks, OpGrads, OpId};
pub use scalar::{max_rel_diff, Scalar};
pub use tensor::{DenseTensor, Jagged2Tensor, JaggedTensor};

pub type JaggedTensorF32 = JaggedTensor<f32>;
pub type JaggedTensorF64 = JaggedTensor<f64>;
pub type Jagged2TensorF32 = Jagged2Tensor<f32>;
pub type Jagged2TensorF64 = Jagged2Tensor<f64>;
pub type DenseTensorF32 = DenseTensor<f32>;
pub type DenseTensorF64 = DenseTensor<f64>;

/// Builds a jagged tensor from per-sample lengths (offsets are their prefix sums).
pub fn make_jagged<T: Scalar>(lengths: &[usize], values: Vec<T>, dim: usize) -> Result<JaggedTensor<T>> {
    JaggedTensor::from_lengths(lengths, values, dim)
}
