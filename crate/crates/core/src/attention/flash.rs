//! Tiled attention with online softmax.
//!
//! Per query row the kernel keeps a running max `m`, a running denominator
//! `l` and an unnormalized accumulator. For each key tile with scores `s`:
//!
//! ```text
//! m'   = max(m, rowmax(s))
//! l'   = l * exp(m - m') + rowsum(exp(s - m'))
//! acc' = acc * exp(m - m') + exp(s - m') @ V_tile
//! ```
//!
//! and finally `O = acc / l`, `lse = m + ln l`. The running max lives in the
//! log-sum-exp output slot until the row is finished.

use rayon::prelude::*;

use super::{score_scale, AttentionGrads, AttentionSaved, ScratchMeter};
use crate::error::{JaggedError, Result};
use crate::scalar::Scalar;
use crate::tensor::{split_by_offsets, JaggedTensor};

#[inline(always)]
fn row_dot<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        acc += x.to_acc() * y.to_acc();
    }
    acc
}

/// Streaming attention over one sample.
///
/// `n_rows` query rows attend over `n_keys` keys, of which only the first
/// `n_valid` are unmasked. Jagged callers pass `n_rows == n_keys == n_valid`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn flash_sample<T: Scalar>(
    q: &[T],
    k: &[T],
    v: &[T],
    dim: usize,
    n_rows: usize,
    n_keys: usize,
    n_valid: usize,
    block_q: usize,
    block_k: usize,
    out: &mut [T],
    lse: &mut [T],
    meter: Option<&ScratchMeter>,
) {
    if n_rows == 0 {
        return;
    }
    let scale = score_scale(dim);
    let bq = block_q.min(n_rows);
    let bk = block_k.min(n_keys).max(1);
    let mut tile = vec![0.0f64; bq * bk];
    let mut acc = vec![0.0f64; bq * dim];
    let mut denom = vec![0.0f64; bq];
    if let Some(m) = meter {
        m.record(tile.len() + acc.len() + denom.len());
    }

    for q0 in (0..n_rows).step_by(bq) {
        let rows = bq.min(n_rows - q0);
        acc.fill(0.0);
        denom.fill(0.0);
        for m in &mut lse[q0..q0 + rows] {
            *m = T::neg_infinity();
        }
        for k0 in (0..n_keys).step_by(bk) {
            let cols = bk.min(n_keys - k0);
            for r in 0..rows {
                let qr = &q[(q0 + r) * dim..(q0 + r + 1) * dim];
                let srow = &mut tile[r * bk..r * bk + cols];
                let mut rowmax = f64::NEG_INFINITY;
                for (c, s) in srow.iter_mut().enumerate() {
                    let key = k0 + c;
                    let score = row_dot(qr, &k[key * dim..(key + 1) * dim]) * scale;
                    *s = if key < n_valid { score } else { f64::NEG_INFINITY };
                    rowmax = rowmax.max(*s);
                }
                let m_old = lse[q0 + r].to_acc();
                let m_new = T::from_acc(m_old.max(rowmax)).to_acc();
                if m_new == f64::NEG_INFINITY {
                    continue;
                }
                let alpha = (m_old - m_new).exp();
                let arow = &mut acc[r * dim..(r + 1) * dim];
                if alpha != 1.0 {
                    denom[r] *= alpha;
                    for a in arow.iter_mut() {
                        *a *= alpha;
                    }
                }
                for (c, &s) in srow.iter().enumerate() {
                    let p = (s - m_new).exp();
                    if p == 0.0 {
                        continue;
                    }
                    denom[r] += p;
                    let key = k0 + c;
                    for (a, &vv) in arow.iter_mut().zip(&v[key * dim..(key + 1) * dim]) {
                        *a += p * vv.to_acc();
                    }
                }
                lse[q0 + r] = T::from_acc(m_new);
            }
        }
        for r in 0..rows {
            let orow = &mut out[(q0 + r) * dim..(q0 + r + 1) * dim];
            let l = denom[r];
            if l > 0.0 {
                for (o, &a) in orow.iter_mut().zip(&acc[r * dim..(r + 1) * dim]) {
                    *o = T::from_acc(a / l);
                }
                lse[q0 + r] = T::from_acc(lse[q0 + r].to_acc() + l.ln());
            } else {
                orow.fill(T::zero());
                lse[q0 + r] = T::neg_infinity();
            }
        }
    }
}

fn check_blocks(block_q: usize, block_k: usize) -> Result<()> {
    if block_q == 0 || block_k == 0 {
        Err(JaggedError::ZeroBlockSize)
    } else {
        Ok(())
    }
}

/// Fused jagged self-attention; never materializes a `Bi x Bi` score block.
pub fn jagged_flash_attention_forward<T: Scalar>(
    q: &JaggedTensor<T>,
    k: &JaggedTensor<T>,
    v: &JaggedTensor<T>,
    block_q: usize,
    block_k: usize,
) -> Result<(JaggedTensor<T>, AttentionSaved<T>)> {
    forward_impl(q, k, v, block_q, block_k, None)
}

/// [`jagged_flash_attention_forward`] that reports its scratch high-water mark.
pub fn jagged_flash_attention_forward_metered<T: Scalar>(
    q: &JaggedTensor<T>,
    k: &JaggedTensor<T>,
    v: &JaggedTensor<T>,
    block_q: usize,
    block_k: usize,
    meter: &ScratchMeter,
) -> Result<(JaggedTensor<T>, AttentionSaved<T>)> {
    forward_impl(q, k, v, block_q, block_k, Some(meter))
}

fn forward_impl<T: Scalar>(
    q: &JaggedTensor<T>,
    k: &JaggedTensor<T>,
    v: &JaggedTensor<T>,
    block_q: usize,
    block_k: usize,
    meter: Option<&ScratchMeter>,
) -> Result<(JaggedTensor<T>, AttentionSaved<T>)> {
    check_blocks(block_q, block_k)?;
    q.check_same_layout(k)?;
    q.check_same_layout(v)?;
    let d = q.dim();
    let mut out = vec![T::zero(); q.values().len()];
    let mut lse = vec![T::neg_infinity(); q.total_rows()];
    split_by_offsets(&mut out, q.offsets(), d)
        .into_par_iter()
        .zip(split_by_offsets(&mut lse, q.offsets(), 1))
        .enumerate()
        .for_each(|(i, (o, m))| {
            let n = q.segment_len(i);
            flash_sample(
                q.segment(i),
                k.segment(i),
                v.segment(i),
                d,
                n,
                n,
                n,
                block_q,
                block_k,
                o,
                m,
                meter,
            );
        });
    let output = JaggedTensor::from_parts(d, q.offsets().to_vec(), out);
    let saved = AttentionSaved {
        output: output.clone(),
        logsumexp: lse,
        block_q,
        block_k,
    };
    Ok((output, saved))
}

/// Backward by blockwise recomputation of `P = exp(S/sqrt(D) - lse)`.
pub fn jagged_flash_attention_backward<T: Scalar>(
    q: &JaggedTensor<T>,
    k: &JaggedTensor<T>,
    v: &JaggedTensor<T>,
    grad_out: &JaggedTensor<T>,
    saved: &AttentionSaved<T>,
) -> Result<AttentionGrads<T>> {
    backward_impl(q, k, v, grad_out, saved, None)
}

pub fn jagged_flash_attention_backward_metered<T: Scalar>(
    q: &JaggedTensor<T>,
    k: &JaggedTensor<T>,
    v: &JaggedTensor<T>,
    grad_out: &JaggedTensor<T>,
    saved: &AttentionSaved<T>,
    meter: &ScratchMeter,
) -> Result<AttentionGrads<T>> {
    backward_impl(q, k, v, grad_out, saved, Some(meter))
}

fn check_saved<T: Scalar>(q: &JaggedTensor<T>, saved: &AttentionSaved<T>) -> Result<()> {
    if saved.block_q == 0 || saved.block_k == 0 {
        return Err(JaggedError::StaleSaved("block size 0".into()));
    }
    if saved.output.offsets() != q.offsets() || saved.output.dim() != q.dim() {
        return Err(JaggedError::StaleSaved("output layout differs from q".into()));
    }
    if saved.logsumexp.len() != q.total_rows() {
        return Err(JaggedError::StaleSaved(format!(
            "{} log-sum-exp entries for {} query rows",
            saved.logsumexp.len(),
            q.total_rows()
        )));
    }
    if let Some(r) = saved.logsumexp.iter().position(|v| !v.is_finite()) {
        return Err(JaggedError::StaleSaved(format!(
            "non-finite log-sum-exp at row {r}"
        )));
    }
    Ok(())
}

fn backward_impl<T: Scalar>(
    q: &JaggedTensor<T>,
    k: &JaggedTensor<T>,
    v: &JaggedTensor<T>,
    grad_out: &JaggedTensor<T>,
    saved: &AttentionSaved<T>,
    meter: Option<&ScratchMeter>,
) -> Result<AttentionGrads<T>> {
    q.check_same_layout(k)?;
    q.check_same_layout(v)?;
    q.check_same_layout(grad_out)?;
    check_saved(q, saved)?;
    let d = q.dim();
    let scale = score_scale(d);
    let len = q.values().len();
    let (mut dq, mut dk, mut dv) = (vec![T::zero(); len], vec![T::zero(); len], vec![T::zero(); len]);
    split_by_offsets(&mut dq, q.offsets(), d)
        .into_par_iter()
        .zip(split_by_offsets(&mut dk, q.offsets(), d))
        .zip(split_by_offsets(&mut dv, q.offsets(), d))
        .enumerate()
        .for_each(|(i, ((dqi, dki), dvi))| {
            let n = q.segment_len(i);
            if n == 0 {
                return;
            }
            let (qs, ks, vs) = (q.segment(i), k.segment(i), v.segment(i));
            let (go, out) = (grad_out.segment(i), saved.output.segment(i));
            let lse = &saved.logsumexp[q.offsets()[i]..q.offsets()[i + 1]];
            let bq = saved.block_q.min(n);
            let bk = saved.block_k.min(n);
            let mut gq = vec![0.0f64; n * d];
            let mut gk = vec![0.0f64; n * d];
            let mut gv = vec![0.0f64; n * d];
            let mut delta = vec![0.0f64; bq];
            let mut ptile = vec![0.0f64; bq * bk];
            if let Some(m) = meter {
                m.record(3 * n * d + delta.len() + ptile.len());
            }
            for q0 in (0..n).step_by(bq) {
                let rows = bq.min(n - q0);
                for (r, dl) in delta[..rows].iter_mut().enumerate() {
                    let row = q0 + r;
                    *dl = row_dot(&go[row * d..(row + 1) * d], &out[row * d..(row + 1) * d]);
                }
                for k0 in (0..n).step_by(bk) {
                    let cols = bk.min(n - k0);
                    for r in 0..rows {
                        let row = q0 + r;
                        let qr = &qs[row * d..(row + 1) * d];
                        let m = lse[row].to_acc();
                        for c in 0..cols {
                            let key = k0 + c;
                            let s = row_dot(qr, &ks[key * d..(key + 1) * d]) * scale;
                            ptile[r * bk + c] = (s - m).exp();
                        }
                    }
                    for r in 0..rows {
                        let row = q0 + r;
                        let gorow = &go[row * d..(row + 1) * d];
                        for c in 0..cols {
                            let key = k0 + c;
                            let p = ptile[r * bk + c];
                            let dp = row_dot(gorow, &vs[key * d..(key + 1) * d]);
                            let ds = p * (dp - delta[r]) * scale;
                            for j in 0..d {
                                gv[key * d + j] += p * gorow[j].to_acc();
                                gq[row * d + j] += ds * ks[key * d + j].to_acc();
                                gk[key * d + j] += ds * qs[row * d + j].to_acc();
                            }
                        }
                    }
                }
            }
            for (dst, src) in [(dqi, &gq), (dki, &gk), (dvi, &gv)] {
                for (o, &g) in dst.iter_mut().zip(src.iter()) {
                    *o = T::from_acc(g);
                }
            }
        });
    let wrap = |values| JaggedTensor::from_parts(d, q.offsets().to_vec(), values);
    Ok(AttentionGrads {
        dq: wrap(dq),
        dk: wrap(dk),
        dv: wrap(dv),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::jagged_attention;
    use crate::lengths::{random_jagged, seeded_rng};
    use crate::scalar::max_rel_diff;

    #[test]
    fn matches_composed_attention() {
        let mut rng = seeded_rng(3);
        let lengths = [0, 1, 2, 17, 33];
        let q = random_jagged::<f64>(&mut rng, &lengths, 5);
        let k = random_jagged::<f64>(&mut rng, &lengths, 5);
        let v = random_jagged::<f64>(&mut rng, &lengths, 5);
        let want = jagged_attention(&q, &k, &v).unwrap();
        for (bq, bk) in [(1, 1), (3, 5), (64, 64)] {
            let (got, saved) = jagged_flash_attention_forward(&q, &k, &v, bq, bk).unwrap();
            assert!(max_rel_diff(got.values(), want.values()) < 1e-12);
            assert_eq!(saved.logsumexp.len(), q.total_rows());
        }
    }

    #[test]
    fn equal_keys_average_values() {
        let q = JaggedTensor::<f64>::from_lengths(&[3], vec![1.0, -2.0, 0.5, 3.0, 2.0, 1.0], 2).unwrap();
        let k = JaggedTensor::from_lengths(&[3], vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0], 2).unwrap();
        let v = JaggedTensor::from_lengths(&[3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 9.0], 2).unwrap();
        let (out, _) = jagged_flash_attention_forward(&q, &k, &v, 2, 2).unwrap();
        for row in out.values().chunks(2) {
            assert!((row[0] - 3.0).abs() < 1e-12 && (row[1] - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_segment_has_neg_inf_lse() {
        let q = JaggedTensor::<f64>::from_lengths(&[0, 1], vec![0.3], 1).unwrap();
        let (out, saved) = jagged_flash_attention_forward(&q, &q, &q, 64, 64).unwrap();
        assert_eq!(out.values(), &[0.3]);
        assert!((saved.logsumexp[0] - 0.09).abs() < 1e-15);
        assert_eq!(saved.logsumexp.len(), 1);
    }

    #[test]
    fn single_row_gradients() {
        let mut rng = seeded_rng(9);
        let lengths = [1, 1, 1];
        let q = random_jagged::<f64>(&mut rng, &lengths, 3);
        let k = random_jagged::<f64>(&mut rng, &lengths, 3);
        let v = random_jagged::<f64>(&mut rng, &lengths, 3);
        let go = random_jagged::<f64>(&mut rng, &lengths, 3);
        let (_, saved) = jagged_flash_attention_forward(&q, &k, &v, 64, 64).unwrap();
        let g = jagged_flash_attention_backward(&q, &k, &v, &go, &saved).unwrap();
        assert_eq!(g.dv.values(), go.values());
        assert!(g.dq.values().iter().chain(g.dk.values()).all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn zero_cotangent_gives_zero_gradients() {
        let mut rng = seeded_rng(10);
        let q = random_jagged::<f64>(&mut rng, &[4, 2], 3);
        let (_, saved) = jagged_flash_attention_forward(&q, &q, &q, 3, 3).unwrap();
        let g = jagged_flash_attention_backward(&q, &q, &q, &q.with_values(vec![0.0; 18]).unwrap(), &saved).unwrap();
        assert!(g.dq.values().iter().chain(g.dk.values()).chain(g.dv.values()).all(|&x| x == 0.0));
    }

    #[test]
    fn rejects_stale_state() {
        let mut rng = seeded_rng(11);
        let q = random_jagged::<f64>(&mut rng, &[2, 2], 2);
        let (_, mut saved) = jagged_flash_attention_forward(&q, &q, &q, 4, 4).unwrap();
        saved.logsumexp.pop();
        assert!(matches!(
            jagged_flash_attention_backward(&q, &q, &q, &q, &saved),
            Err(JaggedError::StaleSaved(_))
        ));
        assert_eq!(
            jagged_flash_attention_forward(&q, &q, &q, 0, 4).unwrap_err(),
            JaggedError::ZeroBlockSize
        );
    }

    #[test]
    fn scratch_stays_within_tile_budget() {
        let mut rng = seeded_rng(12);
        let q = random_jagged::<f32>(&mut rng, &[40, 7], 4);
        let meter = ScratchMeter::new();
        jagged_flash_attention_forward_metered(&q, &q, &q, 8, 16, &meter).unwrap();
        assert_eq!(meter.peak_elements(), 8 * 16 + 8 * 4 + 8);
    }
}
