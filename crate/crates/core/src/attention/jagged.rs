//! Unfused jagged attention built from the jagged operators.

use super::{score_scale, AttentionGrads};
use crate::error::Result;
use crate::linalg::{
    array_jagged_bmm_jagged_out, array_jagged_bmm_jagged_out_vjp, jagged2_softmax, jagged2_softmax_vjp,
    jagged_jagged_bmm_jagged_out, jagged_jagged_bmm_jagged_out_vjp,
};
use crate::scalar::Scalar;
use crate::tensor::{Jagged2Tensor, JaggedTensor};

fn scale_blocks<T: Scalar>(s: Jagged2Tensor<T>, factor: f64) -> Jagged2Tensor<T> {
    let lengths = s.seq_lengths().to_vec();
    let values = s
        .into_values()
        .into_iter()
        .map(|x| T::from_acc(x.to_acc() * factor))
        .collect();
    Jagged2Tensor::from_parts(lengths, values)
}

/// `softmax(Q K^T / sqrt(D)) V` per sample, materializing each `Bi x Bi` block.
pub fn jagged_attention<T: Scalar>(
    q: &JaggedTensor<T>,
    k: &JaggedTensor<T>,
    v: &JaggedTensor<T>,
) -> Result<JaggedTensor<T>> {
    q.check_same_layout(v)?;
    let scores = scale_blocks(jagged_jagged_bmm_jagged_out(q, k)?, score_scale(q.dim()));
    let probs = jagged2_softmax(&scores);
    array_jagged_bmm_jagged_out(&probs, v)
}

/// Backward of [`jagged_attention`] by chaining the operator backwards.
pub fn jagged_attention_vjp<T: Scalar>(
    q: &JaggedTensor<T>,
    k: &JaggedTensor<T>,
    v: &JaggedTensor<T>,
    grad_out: &JaggedTensor<T>,
) -> Result<AttentionGrads<T>> {
    q.check_same_layout(v)?;
    let scale = score_scale(q.dim());
    let scores = scale_blocks(jagged_jagged_bmm_jagged_out(q, k)?, scale);
    let probs = jagged2_softmax(&scores);
    let (dprobs, dv) = array_jagged_bmm_jagged_out_vjp(&probs, v, grad_out)?;
    let dscores = scale_blocks(jagged2_softmax_vjp(&scores, &dprobs)?, scale);
    let (dq, dk) = jagged_jagged_bmm_jagged_out_vjp(q, k, &dscores)?;
    Ok(AttentionGrads { dq, dk, dv })
}
