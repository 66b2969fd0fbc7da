use rayon::prelude::*;

use super::gemm::{gemm, MatView};
use super::DEFAULT_BLOCK;
use crate::error::{JaggedError, Result};
use crate::scalar::Scalar;
use crate::tensor::{split_by_offsets, split_uniform, DenseTensor, Jagged2Tensor, JaggedTensor};

/// `[sum_B, D] x [B, D, T] -> [sum_B, T]`: each segment times its own weight slab.
pub fn jagged_dense_bmm<T: Scalar>(x: &JaggedTensor<T>, w: &DenseTensor<T>) -> Result<JaggedTensor<T>> {
    jagged_dense_bmm_blocked(x, w, DEFAULT_BLOCK)
}

pub fn jagged_dense_bmm_blocked<T: Scalar>(
    x: &JaggedTensor<T>,
    w: &DenseTensor<T>,
    block: usize,
) -> Result<JaggedTensor<T>> {
    let [b, d, t] = w.dims3()?;
    if b != x.batch() || d != x.dim() {
        return Err(JaggedError::ShapeMismatch(format!(
            "jagged [{}, {}] x dense {:?}",
            x.total_rows(),
            x.dim(),
            w.shape()
        )));
    }
    if t == 0 {
        return Err(JaggedError::ShapeMismatch("output width T must be positive".into()));
    }
    let mut out = vec![T::zero(); x.total_rows() * t];
    split_by_offsets(&mut out, x.offsets(), t)
        .into_par_iter()
        .enumerate()
        .for_each(|(i, o)| {
            let n = x.segment_len(i);
            gemm(
                MatView::row_major(x.segment(i), n, d),
                MatView::row_major(w.slab(i), d, t),
                1.0,
                o,
                block,
            );
        });
    Ok(JaggedTensor::from_parts(t, x.offsets().to_vec(), out))
}

/// Returns `(dX, dW)` with `dX_i = dO_i W_i^T` and `dW_i = X_i^T dO_i`.
pub fn jagged_dense_bmm_vjp<T: Scalar>(
    x: &JaggedTensor<T>,
    w: &DenseTensor<T>,
    grad_out: &JaggedTensor<T>,
) -> Result<(JaggedTensor<T>, DenseTensor<T>)> {
    let [b, d, t] = w.dims3()?;
    if b != x.batch() || d != x.dim() || grad_out.dim() != t {
        return Err(JaggedError::ShapeMismatch(
            "jagged_dense_bmm backward: operand shapes disagree".into(),
        ));
    }
    x.check_same_offsets(grad_out)?;
    let mut dx = vec![T::zero(); x.total_rows() * d];
    let mut dw = vec![T::zero(); b * d * t];
    split_by_offsets(&mut dx, x.offsets(), d)
        .into_par_iter()
        .zip(split_uniform(&mut dw, b, d * t))
        .enumerate()
        .for_each(|(i, (dxi, dwi))| {
            let n = x.segment_len(i);
            let go = MatView::row_major(grad_out.segment(i), n, t);
            let wi = MatView::row_major(w.slab(i), d, t);
            let xi = MatView::row_major(x.segment(i), n, d);
            gemm(go, wi.t(), 1.0, dxi, DEFAULT_BLOCK);
            gemm(xi.t(), go, 1.0, dwi, DEFAULT_BLOCK);
        });
    Ok((
        JaggedTensor::from_parts(d, x.offsets().to_vec(), dx),
        DenseTensor::from_parts(vec![b, d, t], dw),
    ))
}

/// `[sum_B, D] x [sum_B, T] -> [B, D, T]`: `Z_i = X_i^T Y_i`.
pub fn jagged_jagged_bmm<T: Scalar>(x: &JaggedTensor<T>, y: &JaggedTensor<T>) -> Result<DenseTensor<T>> {
    jagged_jagged_bmm_blocked(x, y, DEFAULT_BLOCK)
}

pub fn jagged_jagged_bmm_blocked<T: Scalar>(
    x: &JaggedTensor<T>,
    y: &JaggedTensor<T>,
    block: usize,
) -> Result<DenseTensor<T>> {
    x.check_same_offsets(y)?;
    let (b, d, t) = (x.batch(), x.dim(), y.dim());
    let mut out = vec![T::zero(); b * d * t];
    split_uniform(&mut out, b, d * t)
        .into_par_iter()
        .enumerate()
        .for_each(|(i, o)| {
            let n = x.segment_len(i);
            gemm(
                MatView::row_major(x.segment(i), n, d).t(),
                MatView::row_major(y.segment(i), n, t),
                1.0,
                o,
                block,
            );
        });
    Ok(DenseTensor::from_parts(vec![b, d, t], out))
}

/// Returns `(dX, dY)` with `dX_i = Y_i dZ_i^T` and `dY_i = X_i dZ_i`.
pub fn jagged_jagged_bmm_vjp<T: Scalar>(
    x: &JaggedTensor<T>,
    y: &JaggedTensor<T>,
    grad_out: &DenseTensor<T>,
) -> Result<(JaggedTensor<T>, JaggedTensor<T>)> {
    x.check_same_offsets(y)?;
    let (b, d, t) = (x.batch(), x.dim(), y.dim());
    if grad_out.shape() != [b, d, t] {
        return Err(JaggedError::ShapeMismatch(format!(
            "jagged_jagged_bmm backward: grad shape {:?}, expected [{b}, {d}, {t}]",
            grad_out.shape()
        )));
    }
    let mut dx = vec![T::zero(); x.total_rows() * d];
    let mut dy = vec![T::zero(); y.total_rows() * t];
    split_by_offsets(&mut dx, x.offsets(), d)
        .into_par_iter()
        .zip(split_by_offsets(&mut dy, y.offsets(), t))
        .enumerate()
        .for_each(|(i, (dxi, dyi))| {
            let n = x.segment_len(i);
            let gz = MatView::row_major(grad_out.slab(i), d, t);
            gemm(MatView::row_major(y.segment(i), n, t), gz.t(), 1.0, dxi, DEFAULT_BLOCK);
            gemm(MatView::row_major(x.segment(i), n, d), gz, 1.0, dyi, DEFAULT_BLOCK);
        });
    Ok((
        JaggedTensor::from_parts(d, x.offsets().to_vec(), dx),
        JaggedTensor::from_parts(t, y.offsets().to_vec(), dy),
    ))
}

/// `[sum_B, D] x [sum_B, D] -> [sum(Bi*Bi)]`: `S_i = Q_i K_i^T`.
pub fn jagged_jagged_bmm_jagged_out<T: Scalar>(
    q: &JaggedTensor<T>,
    k: &JaggedTensor<T>,
) -> Result<Jagged2Tensor<T>> {
    jagged_jagged_bmm_jagged_out_blocked(q, k, DEFAULT_BLOCK)
}

pub fn jagged_jagged_bmm_jagged_out_blocked<T: Scalar>(
    q: &JaggedTensor<T>,
    k: &JaggedTensor<T>,
    block: usize,
) -> Result<Jagged2Tensor<T>> {
    q.check_same_layout(k)?;
    let lengths = q.lengths();
    let d = q.dim();
    let zeros = Jagged2Tensor::<T>::zeros(lengths.clone());
    let sq = zeros.sq_offsets().to_vec();
    let mut out = zeros.into_values();
    split_by_offsets(&mut out, &sq, 1)
        .into_par_iter()
        .enumerate()
        .for_each(|(i, o)| {
            let n = lengths[i];
            gemm(
                MatView::row_major(q.segment(i), n, d),
                MatView::row_major(k.segment(i), n, d).t(),
                1.0,
                o,
                block,
            );
        });
    Ok(Jagged2Tensor::from_parts(lengths, out))
}

/// Returns `(dQ, dK)` with `dQ_i = dS_i K_i` and `dK_i = dS_i^T Q_i`.
pub fn jagged_jagged_bmm_jagged_out_vjp<T: Scalar>(
    q: &JaggedTensor<T>,
    k: &JaggedTensor<T>,
    grad_out: &Jagged2Tensor<T>,
) -> Result<(JaggedTensor<T>, JaggedTensor<T>)> {
    q.check_same_layout(k)?;
    grad_out.check_same_lengths(&q.lengths())?;
    let d = q.dim();
    let mut dq = vec![T::zero(); q.values().len()];
    let mut dk = vec![T::zero(); k.values().len()];
    split_by_offsets(&mut dq, q.offsets(), d)
        .into_par_iter()
        .zip(split_by_offsets(&mut dk, k.offsets(), d))
        .enumerate()
        .for_each(|(i, (dqi, dki))| {
            let n = q.segment_len(i);
            let gs = MatView::row_major(grad_out.block(i), n, n);
            gemm(gs, MatView::row_major(k.segment(i), n, d), 1.0, dqi, DEFAULT_BLOCK);
            gemm(gs.t(), MatView::row_major(q.segment(i), n, d), 1.0, dki, DEFAULT_BLOCK);
        });
    Ok((
        JaggedTensor::from_parts(d, q.offsets().to_vec(), dq),
        JaggedTensor::from_parts(d, k.offsets().to_vec(), dk),
    ))
}

/// `[sum(Bi*Bi)] x [sum_B, D] -> [sum_B, D]`: `O_i = A_i V_i`.
pub fn array_jagged_bmm_jagged_out<T: Scalar>(
    a: &Jagged2Tensor<T>,
    v: &JaggedTensor<T>,
) -> Result<JaggedTensor<T>> {
    array_jagged_bmm_jagged_out_blocked(a, v, DEFAULT_BLOCK)
}

pub fn array_jagged_bmm_jagged_out_blocked<T: Scalar>(
    a: &Jagged2Tensor<T>,
    v: &JaggedTensor<T>,
    block: usize,
) -> Result<JaggedTensor<T>> {
    a.check_same_lengths(&v.lengths())?;
    let d = v.dim();
    let mut out = vec![T::zero(); v.values().len()];
    split_by_offsets(&mut out, v.offsets(), d)
        .into_par_iter()
        .enumerate()
        .for_each(|(i, o)| {
            let n = v.segment_len(i);
            gemm(
                MatView::row_major(a.block(i), n, n),
                MatView::row_major(v.segment(i), n, d),
                1.0,
                o,
                block,
            );
        });
    Ok(JaggedTensor::from_parts(d, v.offsets().to_vec(), out))
}

/// Returns `(dA, dV)` with `dA_i = dO_i V_i^T` and `dV_i = A_i^T dO_i`.
pub fn array_jagged_bmm_jagged_out_vjp<T: Scalar>(
    a: &Jagged2Tensor<T>,
    v: &JaggedTensor<T>,
    grad_out: &JaggedTensor<T>,
) -> Result<(Jagged2Tensor<T>, JaggedTensor<T>)> {
    a.check_same_lengths(&v.lengths())?;
    v.check_same_layout(grad_out)?;
    let d = v.dim();
    let mut da = vec![T::zero(); a.values().len()];
    let mut dv = vec![T::zero(); v.values().len()];
    split_by_offsets(&mut da, a.sq_offsets(), 1)
        .into_par_iter()
        .zip(split_by_offsets(&mut dv, v.offsets(), d))
        .enumerate()
        .for_each(|(i, (dai, dvi))| {
            let n = v.segment_len(i);
            let go = MatView::row_major(grad_out.segment(i), n, d);
            gemm(go, MatView::row_major(v.segment(i), n, d).t(), 1.0, dai, DEFAULT_BLOCK);
            gemm(MatView::row_major(a.block(i), n, n).t(), go, 1.0, dvi, DEFAULT_BLOCK);
        });
    Ok((
        Jagged2Tensor::from_parts(a.seq_lengths().to_vec(), da),
        JaggedTensor::from_parts(d, v.offsets().to_vec(), dv),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jagged_dense_bmm_small() {
        let x = JaggedTensor::from_lengths(&[2, 1], vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0], 2).unwrap();
        let w = DenseTensor::new(vec![2, 2, 1], vec![1.0, 1.0, 2.0, 0.0]).unwrap();
        let o = jagged_dense_bmm(&x, &w).unwrap();
        assert_eq!(o.values(), &[3.0, 7.0, 10.0]);
        assert_eq!(o.offsets(), x.offsets());
    }

    #[test]
    fn jagged_dense_bmm_identity_and_empty() {
        let x = JaggedTensor::from_lengths(&[2, 0, 1], vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0], 2).unwrap();
        let eye = DenseTensor::new(vec![3, 2, 2], [1.0, 0.0, 0.0, 1.0].repeat(3)).unwrap();
        let o = jagged_dense_bmm(&x, &eye).unwrap();
        assert_eq!(o, x);
        assert!(o.segment(1).is_empty());
    }

    #[test]
    fn jagged_dense_bmm_shape_errors() {
        let x = JaggedTensor::from_lengths(&[1], vec![1.0f64, 2.0], 2).unwrap();
        let w = DenseTensor::new(vec![2, 2, 1], vec![0.0; 4]).unwrap();
        assert!(matches!(jagged_dense_bmm(&x, &w), Err(JaggedError::ShapeMismatch(_))));
        let w = DenseTensor::new(vec![1, 3, 1], vec![0.0; 3]).unwrap();
        assert!(jagged_dense_bmm(&x, &w).is_err());
    }

    #[test]
    fn jagged_jagged_bmm_small() {
        let x = JaggedTensor::from_lengths(&[2, 0], vec![1.0f64, 0.0, 0.0, 1.0], 2).unwrap();
        let y = JaggedTensor::from_lengths(&[2, 0], vec![2.0f64, 3.0], 1).unwrap();
        let z = jagged_jagged_bmm(&x, &y).unwrap();
        assert_eq!(z.shape(), &[2, 2, 1]);
        assert_eq!(z.slab(0), &[2.0, 3.0]);
        assert_eq!(z.slab(1), &[0.0, 0.0]);
    }

    #[test]
    fn orthonormal_gram_is_identity() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let x = JaggedTensor::from_lengths(&[2], vec![s, s, s, -s], 2).unwrap();
        let z = jagged_jagged_bmm(&x, &x).unwrap();
        for (got, want) in z.data().iter().zip([1.0, 0.0, 0.0, 1.0]) {
            assert!((got - want).abs() < 1e-15);
        }
        let scores = jagged_jagged_bmm_jagged_out(&x, &x).unwrap();
        for (got, want) in scores.values().iter().zip([1.0, 0.0, 0.0, 1.0]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn scores_scalar_case() {
        let q = JaggedTensor::from_lengths(&[1], vec![1.0f64, 2.0, 3.0], 3).unwrap();
        let k = JaggedTensor::from_lengths(&[1], vec![-1.0f64, 0.5, 2.0], 3).unwrap();
        let s = jagged_jagged_bmm_jagged_out(&q, &k).unwrap();
        assert_eq!(s.values(), &[6.0]);
        let k2 = JaggedTensor::from_lengths(&[1], vec![1.0f64, 2.0], 2).unwrap();
        assert!(jagged_jagged_bmm_jagged_out(&q, &k2).is_err());
    }

    #[test]
    fn identity_and_averaging_blocks() {
        let v = JaggedTensor::from_lengths(&[2, 1], vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0], 2).unwrap();
        let eye = Jagged2Tensor::new(vec![2, 1], vec![1.0, 0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(array_jagged_bmm_jagged_out(&eye, &v).unwrap(), v);
        let avg = Jagged2Tensor::new(vec![2, 1], vec![0.5, 0.5, 0.5, 0.5, 1.0]).unwrap();
        let o = array_jagged_bmm_jagged_out(&avg, &v).unwrap();
        assert_eq!(o.values(), &[2.0, 3.0, 2.0, 3.0, 5.0, 6.0]);
        let bad = Jagged2Tensor::new(vec![1, 1], vec![1.0, 1.0]).unwrap();
        assert_eq!(
            array_jagged_bmm_jagged_out(&bad, &v),
            Err(JaggedError::SegmentMismatch { sample: 0 })
        );
    }

    #[test]
    fn identity_weight_backward_passes_gradient_through() {
        let x = JaggedTensor::from_lengths(&[2, 1], vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0], 2).unwrap();
        let eye = DenseTensor::new(vec![2, 2, 2], [1.0, 0.0, 0.0, 1.0].repeat(2)).unwrap();
        let go = JaggedTensor::from_lengths(&[2, 1], vec![0.5, -1.0, 2.0, 0.0, 3.0, 1.5], 2).unwrap();
        let (dx, dw) = jagged_dense_bmm_vjp(&x, &eye, &go).unwrap();
        assert_eq!(dx, go);
        assert_eq!(dw.shape(), eye.shape());
    }
}
