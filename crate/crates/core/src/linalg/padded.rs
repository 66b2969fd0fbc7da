//! Padded-dense counterparts of the jagged operators.
//!
//! These work on `[B, max_len, ...]` tensors and do the full padded amount
//! of work, the way a framework without jagged support would. They use plain
//! loops with no shared code from the jagged kernels, which makes them usable
//! as an independent reference. Positions outside the valid region of each
//! sample are zero in every output.

use rayon::prelude::*;

use super::mlp::{Activation, MlpLayer};
use crate::error::{JaggedError, Result};
use crate::scalar::Scalar;
use crate::tensor::DenseTensor;

fn check_lengths(lengths: &[usize], b: usize, max_len: usize) -> Result<()> {
    if lengths.len() != b {
        return Err(JaggedError::ShapeMismatch(format!(
            "{} lengths for a batch of {b}",
            lengths.len()
        )));
    }
    match lengths.iter().position(|&l| l > max_len) {
        Some(sample) => Err(JaggedError::LengthOutOfBounds {
            sample,
            length: lengths[sample],
            max_len,
        }),
        None => Ok(()),
    }
}

/// Batched product of `[B, m, k]` and `[B, k, n]` slabs (optionally transposed).
fn bmm_naive<T: Scalar>(
    a: &DenseTensor<T>,
    b: &DenseTensor<T>,
    trans_a: bool,
    trans_b: bool,
) -> Result<DenseTensor<T>> {
    let [ba, ar, ac] = a.dims3()?;
    let [bb, br, bc] = b.dims3()?;
    let (m, ka) = if trans_a { (ac, ar) } else { (ar, ac) };
    let (kb, n) = if trans_b { (bc, br) } else { (br, bc) };
    if ba != bb || ka != kb {
        return Err(JaggedError::ShapeMismatch(format!(
            "padded bmm {:?} x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut out = vec![T::zero(); ba * m * n];
    if m * n > 0 {
        out.par_chunks_mut(m * n).enumerate().for_each(|(s, o)| {
            let (sa, sb) = (a.slab(s), b.slab(s));
            for i in 0..m {
                for j in 0..n {
                    let mut acc = 0.0f64;
                    for k in 0..ka {
                        let av = if trans_a { sa[k * ac + i] } else { sa[i * ac + k] };
                        let bv = if trans_b { sb[j * bc + k] } else { sb[k * bc + j] };
                        acc += av.to_acc() * bv.to_acc();
                    }
                    o[i * n + j] = T::from_acc(acc);
                }
            }
        });
    }
    Ok(DenseTensor::new(vec![ba, m, n], out).expect("shape computed above"))
}

fn zero_rows_beyond<T: Scalar>(t: DenseTensor<T>, lengths: &[usize]) -> DenseTensor<T> {
    let shape = t.shape().to_vec();
    let (l, w) = (shape[1], shape[2]);
    let mut data = t.into_data();
    for (s, &n) in lengths.iter().enumerate() {
        for v in &mut data[(s * l + n) * w..(s + 1) * l * w] {
            *v = T::zero();
        }
    }
    DenseTensor::from_parts(shape, data)
}

/// `[B, L, D] x [B, D, T] -> [B, L, T]` over every padded row.
pub fn dense_bmm<T: Scalar>(x: &DenseTensor<T>, w: &DenseTensor<T>, lengths: &[usize]) -> Result<DenseTensor<T>> {
    let [b, l, _] = x.dims3()?;
    check_lengths(lengths, b, l)?;
    Ok(zero_rows_beyond(bmm_naive(x, w, false, false)?, lengths))
}

/// `[B, L, D]^T x [B, L, T] -> [B, D, T]`; padding rows must hold zeros.
pub fn dense_transposed_bmm<T: Scalar>(x: &DenseTensor<T>, y: &DenseTensor<T>) -> Result<DenseTensor<T>> {
    bmm_naive(x, y, true, false)
}

/// Column softmax over the first `lengths[i]` rows of each `[L, D]` slab.
pub fn dense_masked_softmax<T: Scalar>(x: &DenseTensor<T>, lengths: &[usize]) -> Result<DenseTensor<T>> {
    let [b, l, d] = x.dims3()?;
    check_lengths(lengths, b, l)?;
    let mut out = vec![T::zero(); b * l * d];
    if l * d > 0 {
        out.par_chunks_mut(l * d).enumerate().for_each(|(s, o)| {
            let slab = x.slab(s);
            let n = lengths[s];
            for c in 0..d {
                let mut max = f64::NEG_INFINITY;
                for r in 0..l {
                    let v = if r < n { slab[r * d + c].to_acc() } else { f64::NEG_INFINITY };
                    max = max.max(v);
                }
                let mut sum = 0.0;
                let mut e = vec![0.0f64; l];
                for r in 0..l {
                    e[r] = if r < n { (slab[r * d + c].to_acc() - max).exp() } else { 0.0 };
                    sum += e[r];
                }
                for r in 0..n {
                    o[r * d + c] = T::from_acc(e[r] / sum);
                }
            }
        });
    }
    DenseTensor::new(vec![b, l, d], out)
}

/// `[B, L, D] x [B, L, D]^T -> [B, L, L]` over every padded position.
pub fn dense_scores<T: Scalar>(q: &DenseTensor<T>, k: &DenseTensor<T>) -> Result<DenseTensor<T>> {
    bmm_naive(q, k, false, true)
}

/// `[B, L, L] x [B, L, D] -> [B, L, D]`.
pub fn dense_apply_scores<T: Scalar>(a: &DenseTensor<T>, v: &DenseTensor<T>, lengths: &[usize]) -> Result<DenseTensor<T>> {
    let [b, l, _] = v.dims3()?;
    check_lengths(lengths, b, l)?;
    Ok(zero_rows_beyond(bmm_naive(a, v, false, false)?, lengths))
}

/// Row softmax of each `[L, L]` slab restricted to the valid `n x n` corner.
pub fn dense_masked_row_softmax<T: Scalar>(s: &DenseTensor<T>, lengths: &[usize]) -> Result<DenseTensor<T>> {
    let [b, l, l2] = s.dims3()?;
    if l != l2 {
        return Err(JaggedError::ShapeMismatch(format!("score slabs must be square, got {l}x{l2}")));
    }
    check_lengths(lengths, b, l)?;
    let mut out = vec![T::zero(); b * l * l];
    if l > 0 {
        out.par_chunks_mut(l * l).enumerate().for_each(|(smp, o)| {
            let slab = s.slab(smp);
            let n = lengths[smp];
            let mut e = vec![0.0f64; l];
            for r in 0..n {
                let row = &slab[r * l..(r + 1) * l];
                let mut max = f64::NEG_INFINITY;
                for (c, v) in row.iter().enumerate() {
                    let v = if c < n { v.to_acc() } else { f64::NEG_INFINITY };
                    max = max.max(v);
                }
                let mut sum = 0.0;
                for c in 0..l {
                    e[c] = if c < n { (row[c].to_acc() - max).exp() } else { 0.0 };
                    sum += e[c];
                }
                for c in 0..n {
                    o[r * l + c] = T::from_acc(e[c] / sum);
                }
            }
        });
    }
    DenseTensor::new(vec![b, l, l], out)
}

/// Applies the MLP to every padded row, then zeroes the padding.
pub fn dense_mlp<T: Scalar>(x: &DenseTensor<T>, layers: &[MlpLayer<T>], lengths: &[usize]) -> Result<DenseTensor<T>> {
    let [b, l, d_in] = x.dims3()?;
    check_lengths(lengths, b, l)?;
    let mut h = x.data().to_vec();
    let mut width = d_in;
    for (idx, layer) in layers.iter().enumerate() {
        if layer.d_in() != width {
            return Err(JaggedError::ShapeMismatch(format!(
                "layer {idx} expects width {}, got {width}",
                layer.d_in()
            )));
        }
        let d_out = layer.d_out();
        let w = layer.weight().data();
        let bias = layer.bias();
        let act = layer.activation();
        let mut next = vec![T::zero(); b * l * d_out];
        next.par_chunks_mut(d_out.max(1)).enumerate().for_each(|(r, o)| {
            let row = &h[r * width..(r + 1) * width];
            for j in 0..d_out {
                let mut acc = 0.0f64;
                for k in 0..width {
                    acc += row[k].to_acc() * w[k * d_out + j].to_acc();
                }
                let z = acc + bias[j].to_acc();
                o[j] = T::from_acc(match act {
                    Activation::Relu => z.max(0.0),
                    Activation::None => z,
                });
            }
        });
        h = next;
        width = d_out;
    }
    Ok(zero_rows_beyond(DenseTensor::new(vec![b, l, width], h)?, lengths))
}
