//! Cross-attention from dense target items onto jagged feature sequences.

use super::score_scale;
use crate::error::{JaggedError, Result};
use crate::linalg::{jagged_dense_bmm, jagged_jagged_bmm, jagged_softmax};
use crate::scalar::Scalar;
use crate::tensor::{DenseTensor, JaggedTensor};

/// Weights each sample's feature values by their affinity to every target.
///
/// `k_feat`, `v_feat`: `[sum_B, D]` sharing offsets; `targets`: `[B, Tq, D]`.
/// Scores `K_i T_i^T / sqrt(D)` are softmaxed over the sample's feature rows
/// for each target, and the output is `P_i^T V_i` shaped `[B, Tq, D]`.
/// Samples without features produce zero rows.
pub fn feature_interaction<T: Scalar>(
    k_feat: &JaggedTensor<T>,
    v_feat: &JaggedTensor<T>,
    targets: &DenseTensor<T>,
) -> Result<DenseTensor<T>> {
    k_feat.check_same_layout(v_feat)?;
    let [b, tq, d] = targets.dims3()?;
    if b != k_feat.batch() || d != k_feat.dim() {
        return Err(JaggedError::ShapeMismatch(format!(
            "targets {:?} for features [{}, {}] over {} samples",
            targets.shape(),
            k_feat.total_rows(),
            k_feat.dim(),
            k_feat.batch()
        )));
    }
    if tq == 0 {
        return DenseTensor::zeros(vec![b, 0, d]);
    }
    // per-sample transpose [Tq, D] -> [D, Tq]
    let mut transposed = vec![T::zero(); b * d * tq];
    for s in 0..b {
        let src = targets.slab(s);
        let dst = &mut transposed[s * d * tq..(s + 1) * d * tq];
        for t in 0..tq {
            for c in 0..d {
                dst[c * tq + t] = src[t * d + c];
            }
        }
    }
    let transposed = DenseTensor::from_parts(vec![b, d, tq], transposed);
    let scale = score_scale(d);
    let scores = jagged_dense_bmm(k_feat, &transposed)?;
    let scores = crate::tensor::map_unary(&scores, |x| T::from_acc(x.to_acc() * scale));
    let weights = jagged_softmax(&scores);
    jagged_jagged_bmm(&weights, v_feat)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_feature_is_returned_for_every_target() {
        let kf = JaggedTensor::from_lengths(&[1, 0], vec![0.5, 1.0], 2).unwrap();
        let vf = JaggedTensor::from_lengths(&[1, 0], vec![3.0, -4.0], 2).unwrap();
        let targets = DenseTensor::new(vec![2, 2, 2], vec![1.0, 2.0, -1.0, 0.0, 1.0, 1.0, 2.0, 2.0]).unwrap();
        let out = feature_interaction(&kf, &vf, &targets).unwrap();
        assert_eq!(out.shape(), &[2, 2, 2]);
        assert_eq!(out.data(), &[3.0, -4.0, 3.0, -4.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn orthogonal_targets_average_values() {
        let kf = JaggedTensor::from_lengths(&[2], vec![1.0, 0.0, 2.0, 0.0], 2).unwrap();
        let vf = JaggedTensor::from_lengths(&[2], vec![1.0, 3.0, 5.0, 7.0], 2).unwrap();
        let targets = DenseTensor::new(vec![1, 1, 2], vec![0.0, 1.0]).unwrap();
        let out = feature_interaction(&kf, &vf, &targets).unwrap();
        assert_eq!(out.data(), &[3.0, 5.0]);
    }
}
