use rayon::prelude::*;

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::{split_by_offsets, Jagged2Tensor, JaggedTensor};

/// Max-subtracted softmax over `len` elements spaced `stride` apart, in `f64`.
pub(crate) fn softmax_strided<T: Scalar>(src: &[T], len: usize, stride: usize, out: &mut [f64]) {
    let mut max = f64::NEG_INFINITY;
    for r in 0..len {
        max = max.max(src[r * stride].to_acc());
    }
    let mut sum = 0.0f64;
    for r in 0..len {
        let e = (src[r * stride].to_acc() - max).exp();
        out[r] = e;
        sum += e;
    }
    for o in out[..len].iter_mut() {
        *o /= sum;
    }
}

/// Softmax along each segment's rows, independently per column.
pub fn jagged_softmax<T: Scalar>(x: &JaggedTensor<T>) -> JaggedTensor<T> {
    let d = x.dim();
    let mut out = vec![T::zero(); x.values().len()];
    split_by_offsets(&mut out, x.offsets(), d)
        .into_par_iter()
        .enumerate()
        .for_each(|(i, o)| {
            let n = x.segment_len(i);
            if n == 0 {
                return;
            }
            let seg = x.segment(i);
            let mut p = vec![0.0f64; n];
            for c in 0..d {
                softmax_strided(&seg[c..], n, d, &mut p);
                for r in 0..n {
                    o[r * d + c] = T::from_acc(p[r]);
                }
            }
        });
    JaggedTensor::from_parts(d, x.offsets().to_vec(), out)
}

/// `dx = p * (dp - sum_rows(dp * p))` per (sample, column), with `p` recomputed from `x`.
pub fn jagged_softmax_vjp<T: Scalar>(x: &JaggedTensor<T>, grad_out: &JaggedTensor<T>) -> Result<JaggedTensor<T>> {
    x.check_same_layout(grad_out)?;
    let d = x.dim();
    let mut out = vec![T::zero(); x.values().len()];
    split_by_offsets(&mut out, x.offsets(), d)
        .into_par_iter()
        .enumerate()
        .for_each(|(i, o)| {
            let n = x.segment_len(i);
            if n == 0 {
                return;
            }
            let (seg, g) = (x.segment(i), grad_out.segment(i));
            let mut p = vec![0.0f64; n];
            for c in 0..d {
                softmax_strided(&seg[c..], n, d, &mut p);
                let mut inner = 0.0f64;
                for r in 0..n {
                    inner += g[r * d + c].to_acc() * p[r];
                }
                for r in 0..n {
                    o[r * d + c] = T::from_acc(p[r] * (g[r * d + c].to_acc() - inner));
                }
            }
        });
    Ok(JaggedTensor::from_parts(d, x.offsets().to_vec(), out))
}

/// Row-wise softmax of every `Bi x Bi` block (normalized over the key axis).
pub fn jagged2_softmax<T: Scalar>(s: &Jagged2Tensor<T>) -> Jagged2Tensor<T> {
    let mut out = vec![T::zero(); s.values().len()];
    split_by_offsets(&mut out, s.sq_offsets(), 1)
        .into_par_iter()
        .enumerate()
        .for_each(|(i, o)| {
            let n = s.seq_lengths()[i];
            let block = s.block(i);
            let mut p = vec![0.0f64; n];
            for r in 0..n {
                softmax_strided(&block[r * n..], n, 1, &mut p);
                for (dst, &v) in o[r * n..(r + 1) * n].iter_mut().zip(&p) {
                    *dst = T::from_acc(v);
                }
            }
        });
    Jagged2Tensor::from_parts(s.seq_lengths().to_vec(), out)
}

pub fn jagged2_softmax_vjp<T: Scalar>(s: &Jagged2Tensor<T>, grad_out: &Jagged2Tensor<T>) -> Result<Jagged2Tensor<T>> {
    grad_out.check_same_lengths(s.seq_lengths())?;
    let mut out = vec![T::zero(); s.values().len()];
    split_by_offsets(&mut out, s.sq_offsets(), 1)
        .into_par_iter()
        .enumerate()
        .for_each(|(i, o)| {
            let n = s.seq_lengths()[i];
            let (block, g) = (s.block(i), grad_out.block(i));
            let mut p = vec![0.0f64; n];
            for r in 0..n {
                softmax_strided(&block[r * n..], n, 1, &mut p);
                let grow = &g[r * n..(r + 1) * n];
                let inner: f64 = grow.iter().zip(&p).fold(0.0, |acc, (gv, pv)| acc + gv.to_acc() * pv);
                for c in 0..n {
                    o[r * n + c] = T::from_acc(p[c] * (grow[c].to_acc() - inner));
                }
            }
        });
    Ok(Jagged2Tensor::from_parts(s.seq_lengths().to_vec(), out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_two_values() {
        let x = JaggedTensor::from_lengths(&[2], vec![0.0f64, std::f64::consts::LN_2], 1).unwrap();
        let p = jagged_softmax(&x);
        assert!((p.values()[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.values()[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn equal_values_uniform_and_singletons_exact() {
        let x = JaggedTensor::from_lengths(&[4, 1, 0], vec![3.0f32, 3.0, 3.0, 3.0, -123.0], 1).unwrap();
        let p = jagged_softmax(&x);
        assert_eq!(&p.values()[..4], &[0.25; 4]);
        assert_eq!(p.values()[4], 1.0);
        assert!(p.segment(2).is_empty());
    }

    #[test]
    fn empty_segments_in_wide_tensors() {
        let x = JaggedTensor::from_lengths(&[0, 2, 0], vec![1.0, 2.0, 3.0, 4.0], 2).unwrap();
        let p = jagged_softmax(&x);
        assert_eq!(p.offsets(), x.offsets());
        let g = jagged_softmax_vjp(&x, &p).unwrap();
        assert_eq!(g.values().len(), 4);
    }

    #[test]
    fn columns_are_independent() {
        // column 0 is constant, column 1 is not
        let x = JaggedTensor::from_lengths(&[2], vec![1.0f64, 0.0, 1.0, std::f64::consts::LN_2], 2).unwrap();
        let p = jagged_softmax(&x);
        assert_eq!(p.values()[0], 0.5);
        assert_eq!(p.values()[2], 0.5);
        assert!((p.values()[3] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn jagged2_rows() {
        let s = Jagged2Tensor::new(vec![2, 1, 0], vec![0.0f64, 0.0, 0.0, 3.0f64.ln(), 42.0]).unwrap();
        let p = jagged2_softmax(&s);
        assert_eq!(&p.values()[..2], &[0.5, 0.5]);
        assert!((p.values()[2] - 0.25).abs() < 1e-15);
        assert!((p.values()[3] - 0.75).abs() < 1e-15);
        assert_eq!(p.values()[4], 1.0);
    }

    #[test]
    fn large_inputs_stay_finite() {
        let s = Jagged2Tensor::new(vec![2], vec![1000.0f32, 999.0, -1000.0, 1000.0]).unwrap();
        let p = jagged2_softmax(&s);
        assert!(p.values().iter().all(|v| v.is_finite()));
    }
}
