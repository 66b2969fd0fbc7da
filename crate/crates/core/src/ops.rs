//! Operator registry: stable string ids plus uniform forward / backward dispatch.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attention::{
    jagged_attention, jagged_attention_vjp, jagged_flash_attention_backward, jagged_flash_attention_forward,
    DEFAULT_BLOCK_K, DEFAULT_BLOCK_Q,
};
use crate::error::{JaggedError, Result};
use crate::linalg::{self, Activation, MlpLayer};
use crate::scalar::Scalar;
use crate::tensor::{DenseTensor, Jagged2Tensor, JaggedTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpId {
    JaggedDenseBmm,
    JaggedJaggedBmm,
    JaggedSoftmax,
    JaggedJaggedBmmJaggedOut,
    ArrayJaggedBmmJaggedOut,
    Jagged2Softmax,
    JaggedMlp,
    DenseAttention,
    DenseFlashAttention,
    JaggedAttention,
    JaggedFlashAttention,
}

impl OpId {
    pub const ALL: [OpId; 11] = [
        Self::JaggedDenseBmm,
        Self::JaggedJaggedBmm,
        Self::JaggedSoftmax,
        Self::JaggedJaggedBmmJaggedOut,
        Self::ArrayJaggedBmmJaggedOut,
        Self::Jagged2Softmax,
        Self::JaggedMlp,
        Self::DenseAttention,
        Self::DenseFlashAttention,
        Self::JaggedAttention,
        Self::JaggedFlashAttention,
    ];

    /// The six benchmarked jagged kernels.
    pub const KERNELS: [OpId; 6] = [
        Self::JaggedDenseBmm,
        Self::JaggedJaggedBmm,
        Self::JaggedSoftmax,
        Self::JaggedJaggedBmmJaggedOut,
        Self::ArrayJaggedBmmJaggedOut,
        Self::Jagged2Softmax,
    ];

    pub const ATTENTION: [OpId; 4] = [
        Self::DenseAttention,
        Self::DenseFlashAttention,
        Self::JaggedAttention,
        Self::JaggedFlashAttention,
    ];

    /// Ops with a registered backward (dense attention has none).
    pub const DIFFERENTIABLE: [OpId; 9] = [
        Self::JaggedDenseBmm,
        Self::JaggedJaggedBmm,
        Self::JaggedSoftmax,
        Self::JaggedJaggedBmmJaggedOut,
        Self::ArrayJaggedBmmJaggedOut,
        Self::Jagged2Softmax,
        Self::JaggedMlp,
        Self::JaggedAttention,
        Self::JaggedFlashAttention,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::JaggedDenseBmm => "jagged_dense_bmm",
            Self::JaggedJaggedBmm => "jagged_jagged_bmm",
            Self::JaggedSoftmax => "jagged_softmax",
            Self::JaggedJaggedBmmJaggedOut => "jagged_jagged_bmm_jagged_out",
            Self::ArrayJaggedBmmJaggedOut => "array_jagged_bmm_jagged_out",
            Self::Jagged2Softmax => "jagged2_softmax",
            Self::JaggedMlp => "jagged_mlp",
            Self::DenseAttention => "dense_attention",
            Self::DenseFlashAttention => "dense_flash_attention",
            Self::JaggedAttention => "jagged_attention",
            Self::JaggedFlashAttention => "jagged_flash_attention",
        }
    }

    pub fn is_attention(self) -> bool {
        Self::ATTENTION.contains(&self)
    }

    pub fn is_flash(self) -> bool {
        matches!(self, Self::DenseFlashAttention | Self::JaggedFlashAttention)
    }

    pub fn has_backward(self) -> bool {
        Self::DIFFERENTIABLE.contains(&self)
    }
}

impl fmt::Display for OpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OpId {
    type Err = JaggedError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|op| op.as_str() == s)
            .ok_or_else(|| JaggedError::UnknownOp(s.to_string()))
    }
}

/// Any of the three layouts, for uniform dispatch.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyTensor<T> {
    Jagged(JaggedTensor<T>),
    Jagged2(Jagged2Tensor<T>),
    Dense(DenseTensor<T>),
}

impl<T: Scalar> AnyTensor<T> {
    pub fn values(&self) -> &[T] {
        match self {
            Self::Jagged(t) => t.values(),
            Self::Jagged2(t) => t.values(),
            Self::Dense(t) => t.data(),
        }
    }

    /// Same layout, new buffer.
    pub fn with_values(&self, values: Vec<T>) -> Result<Self> {
        Ok(match self {
            Self::Jagged(t) => Self::Jagged(t.with_values(values)?),
            Self::Jagged2(t) => Self::Jagged2(t.with_values(values)?),
            Self::Dense(t) => Self::Dense(t.with_data(values)?),
        })
    }

    pub fn zeros_like(&self) -> Self {
        self.with_values(vec![T::zero(); self.values().len()])
            .expect("same length as source")
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        match (self, other) {
            (Self::Jagged(a), Self::Jagged(b)) => a.dim() == b.dim() && a.offsets() == b.offsets(),
            (Self::Jagged2(a), Self::Jagged2(b)) => a.seq_lengths() == b.seq_lengths(),
            (Self::Dense(a), Self::Dense(b)) => a.shape() == b.shape(),
            _ => false,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Jagged(_) => "jagged",
            Self::Jagged2(_) => "jagged2",
            Self::Dense(_) => "dense",
        }
    }

    pub fn as_jagged(&self) -> Result<&JaggedTensor<T>> {
        match self {
            Self::Jagged(t) => Ok(t),
            other => Err(JaggedError::ShapeMismatch(format!("expected jagged, got {}", other.kind()))),
        }
    }

    pub fn as_jagged2(&self) -> Result<&Jagged2Tensor<T>> {
        match self {
            Self::Jagged2(t) => Ok(t),
            other => Err(JaggedError::ShapeMismatch(format!("expected jagged2, got {}", other.kind()))),
        }
    }

    pub fn as_dense(&self) -> Result<&DenseTensor<T>> {
        match self {
            Self::Dense(t) => Ok(t),
            other => Err(JaggedError::ShapeMismatch(format!("expected dense, got {}", other.kind()))),
        }
    }
}

impl<T> From<JaggedTensor<T>> for AnyTensor<T> {
    fn from(t: JaggedTensor<T>) -> Self {
        Self::Jagged(t)
    }
}

impl<T> From<Jagged2Tensor<T>> for AnyTensor<T> {
    fn from(t: Jagged2Tensor<T>) -> Self {
        Self::Jagged2(t)
    }
}

impl<T> From<DenseTensor<T>> for AnyTensor<T> {
    fn from(t: DenseTensor<T>) -> Self {
        Self::Dense(t)
    }
}

/// Per-input gradients, in input order and with matching layouts.
pub type OpGrads<T> = Vec<AnyTensor<T>>;

/// Tile edges used by the flash kernels when dispatched through the registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Blocks {
    pub q: usize,
    pub k: usize,
}

impl Default for Blocks {
    fn default() -> Self {
        Self {
            q: DEFAULT_BLOCK_Q,
            k: DEFAULT_BLOCK_K,
        }
    }
}

fn arity<T>(op: OpId, inputs: &[AnyTensor<T>], n: usize) -> Result<()> {
    if inputs.len() != n {
        return Err(JaggedError::ShapeMismatch(format!(
            "{op} takes {n} inputs, got {}",
            inputs.len()
        )));
    }
    Ok(())
}

/// MLP inputs are `[x, W_0, b_0, W_1, b_1, ...]` with biases shaped `[1, d_out]`;
/// every layer but the last uses relu.
pub fn mlp_layers_from_inputs<T: Scalar>(inputs: &[AnyTensor<T>]) -> Result<Vec<MlpLayer<T>>> {
    if inputs.len() < 3 || inputs.len().is_multiple_of(2) {
        return Err(JaggedError::ShapeMismatch(
            "jagged_mlp takes x followed by (weight, bias) pairs".into(),
        ));
    }
    let n_layers = (inputs.len() - 1) / 2;
    (0..n_layers)
        .map(|l| {
            let w = inputs[1 + 2 * l].as_dense()?.clone();
            let b = inputs[2 + 2 * l].as_dense()?.data().to_vec();
            let act = if l + 1 < n_layers { Activation::Relu } else { Activation::None };
            MlpLayer::new(w, b, act)
        })
        .collect()
}

pub fn forward<T: Scalar>(op: OpId, inputs: &[AnyTensor<T>], blocks: Blocks) -> Result<AnyTensor<T>> {
    use AnyTensor as A;
    Ok(match op {
        OpId::JaggedDenseBmm => {
            arity(op, inputs, 2)?;
            A::Jagged(linalg::jagged_dense_bmm(inputs[0].as_jagged()?, inputs[1].as_dense()?)?)
        }
        OpId::JaggedJaggedBmm => {
            arity(op, inputs, 2)?;
            A::Dense(linalg::jagged_jagged_bmm(inputs[0].as_jagged()?, inputs[1].as_jagged()?)?)
        }
        OpId::JaggedSoftmax => {
            arity(op, inputs, 1)?;
            A::Jagged(linalg::jagged_softmax(inputs[0].as_jagged()?))
        }
        OpId::JaggedJaggedBmmJaggedOut => {
            arity(op, inputs, 2)?;
            A::Jagged2(linalg::jagged_jagged_bmm_jagged_out(
                inputs[0].as_jagged()?,
                inputs[1].as_jagged()?,
            )?)
        }
        OpId::ArrayJaggedBmmJaggedOut => {
            arity(op, inputs, 2)?;
            A::Jagged(linalg::array_jagged_bmm_jagged_out(
                inputs[0].as_jagged2()?,
                inputs[1].as_jagged()?,
            )?)
        }
        OpId::Jagged2Softmax => {
            arity(op, inputs, 1)?;
            A::Jagged2(linalg::jagged2_softmax(inputs[0].as_jagged2()?))
        }
        OpId::JaggedMlp => {
            let layers = mlp_layers_from_inputs(inputs)?;
            A::Jagged(linalg::jagged_mlp(inputs[0].as_jagged()?, &layers)?)
        }
        OpId::JaggedAttention => {
            arity(op, inputs, 3)?;
            A::Jagged(jagged_attention(
                inputs[0].as_jagged()?,
                inputs[1].as_jagged()?,
                inputs[2].as_jagged()?,
            )?)
        }
        OpId::JaggedFlashAttention => {
            arity(op, inputs, 3)?;
            let (out, _) = jagged_flash_attention_forward(
                inputs[0].as_jagged()?,
                inputs[1].as_jagged()?,
                inputs[2].as_jagged()?,
                blocks.q,
                blocks.k,
            )?;
            A::Jagged(out)
        }
        OpId::DenseAttention | OpId::DenseFlashAttention => {
            return Err(JaggedError::NoBackward(op.to_string()))
        }
    })
}

/// Vector-Jacobian product of `op` at `inputs` against cotangent `grad_out`.
pub fn vjp<T: Scalar>(
    op: OpId,
    inputs: &[AnyTensor<T>],
    grad_out: &AnyTensor<T>,
    blocks: Blocks,
) -> Result<OpGrads<T>> {
    use AnyTensor as A;
    Ok(match op {
        OpId::JaggedDenseBmm => {
            arity(op, inputs, 2)?;
            let (dx, dw) =
                linalg::jagged_dense_bmm_vjp(inputs[0].as_jagged()?, inputs[1].as_dense()?, grad_out.as_jagged()?)?;
            vec![A::Jagged(dx), A::Dense(dw)]
        }
        OpId::JaggedJaggedBmm => {
            arity(op, inputs, 2)?;
            let (dx, dy) =
                linalg::jagged_jagged_bmm_vjp(inputs[0].as_jagged()?, inputs[1].as_jagged()?, grad_out.as_dense()?)?;
            vec![A::Jagged(dx), A::Jagged(dy)]
        }
        OpId::JaggedSoftmax => {
            arity(op, inputs, 1)?;
            vec![A::Jagged(linalg::jagged_softmax_vjp(inputs[0].as_jagged()?, grad_out.as_jagged()?)?)]
        }
        OpId::JaggedJaggedBmmJaggedOut => {
            arity(op, inputs, 2)?;
            let (dq, dk) = linalg::jagged_jagged_bmm_jagged_out_vjp(
                inputs[0].as_jagged()?,
                inputs[1].as_jagged()?,
                grad_out.as_jagged2()?,
            )?;
            vec![A::Jagged(dq), A::Jagged(dk)]
        }
        OpId::ArrayJaggedBmmJaggedOut => {
            arity(op, inputs, 2)?;
            let (da, dv) = linalg::array_jagged_bmm_jagged_out_vjp(
                inputs[0].as_jagged2()?,
                inputs[1].as_jagged()?,
                grad_out.as_jagged()?,
            )?;
            vec![A::Jagged2(da), A::Jagged(dv)]
        }
        OpId::Jagged2Softmax => {
            arity(op, inputs, 1)?;
            vec![A::Jagged2(linalg::jagged2_softmax_vjp(inputs[0].as_jagged2()?, grad_out.as_jagged2()?)?)]
        }
        OpId::JaggedMlp => {
            let layers = mlp_layers_from_inputs(inputs)?;
            let grads = linalg::jagged_mlp_vjp(inputs[0].as_jagged()?, &layers, grad_out.as_jagged()?)?;
            let mut out = vec![A::Jagged(grads.dx)];
            for (dw, db) in grads.layers {
                let n = db.len();
                out.push(A::Dense(dw));
                out.push(A::Dense(DenseTensor::new(vec![1, n], db)?));
            }
            out
        }
        OpId::JaggedAttention => {
            arity(op, inputs, 3)?;
            let g = jagged_attention_vjp(
                inputs[0].as_jagged()?,
                inputs[1].as_jagged()?,
                inputs[2].as_jagged()?,
                grad_out.as_jagged()?,
            )?;
            vec![A::Jagged(g.dq), A::Jagged(g.dk), A::Jagged(g.dv)]
        }
        OpId::JaggedFlashAttention => {
            arity(op, inputs, 3)?;
            let (q, k, v) = (inputs[0].as_jagged()?, inputs[1].as_jagged()?, inputs[2].as_jagged()?);
            let (_, saved) = jagged_flash_attention_forward(q, k, v, blocks.q, blocks.k)?;
            let g = jagged_flash_attention_backward(q, k, v, grad_out.as_jagged()?, &saved)?;
            vec![A::Jagged(g.dq), A::Jagged(g.dk), A::Jagged(g.dv)]
        }
        OpId::DenseAttention | OpId::DenseFlashAttention => {
            return Err(JaggedError::NoBackward(op.to_string()))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for op in OpId::ALL {
            assert_eq!(op.as_str().parse::<OpId>().unwrap(), op);
            assert_eq!(serde_json::to_string(&op).unwrap(), format!("\"{op}\""));
        }
        assert_eq!(
            "jagged_bmm".parse::<OpId>(),
            Err(JaggedError::UnknownOp("jagged_bmm".into()))
        );
    }

    #[test]
    fn dense_attention_has_no_backward() {
        let x: AnyTensor<f64> = JaggedTensor::zeros(1, vec![0, 1]).unwrap().into();
        assert!(matches!(
            vjp(OpId::DenseAttention, std::slice::from_ref(&x), &x, Blocks::default()),
            Err(JaggedError::NoBackward(_))
        ));
    }

    #[test]
    fn zero_cotangent_zero_grads() {
        let x: JaggedTensor<f64> = JaggedTensor::from_lengths(&[2, 1], vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6], 2).unwrap();
        let inputs = [AnyTensor::from(x.clone()), x.clone().into(), x.into()];
        for op in [OpId::JaggedAttention, OpId::JaggedFlashAttention] {
            let out = forward(op, &inputs, Blocks::default()).unwrap();
            let grads = vjp(op, &inputs, &out.zeros_like(), Blocks::default()).unwrap();
            assert!(grads.iter().all(|g| g.values().iter().all(|&v| v == 0.0)));
        }
    }
}
