//! Padded baselines. Both do the full `L x L` amount of score work per sample.

use rayon::prelude::*;

use super::flash::flash_sample;
use super::{score_scale, AttentionSaved};
use crate::error::{JaggedError, Result};
use crate::scalar::Scalar;
use crate::tensor::{split_uniform, DenseTensor};

fn check_inputs<T: Scalar>(
    q: &DenseTensor<T>,
    k: &DenseTensor<T>,
    v: &DenseTensor<T>,
    lengths: &[usize],
) -> Result<[usize; 3]> {
    let dims = q.dims3()?;
    if k.shape() != q.shape() || v.shape() != q.shape() {
        return Err(JaggedError::ShapeMismatch(format!(
            "q {:?}, k {:?}, v {:?}",
            q.shape(),
            k.shape(),
            v.shape()
        )));
    }
    let [b, l, d] = dims;
    if d == 0 {
        return Err(JaggedError::ShapeMismatch("head dim must be positive".into()));
    }
    if lengths.len() != b {
        return Err(JaggedError::ShapeMismatch(format!(
            "{} lengths for a batch of {b}",
            lengths.len()
        )));
    }
    if let Some(sample) = lengths.iter().position(|&n| n > l) {
        return Err(JaggedError::LengthOutOfBounds {
            sample,
            length: lengths[sample],
            max_len: l,
        });
    }
    Ok(dims)
}

/// Reference attention that materializes the score and probability matrices.
///
/// Keys at or beyond `lengths[i]` are masked; output rows at or beyond
/// `lengths[i]` are zero.
pub fn dense_attention<T: Scalar>(
    q: &DenseTensor<T>,
    k: &DenseTensor<T>,
    v: &DenseTensor<T>,
    lengths: &[usize],
) -> Result<DenseTensor<T>> {
    let [b, l, d] = check_inputs(q, k, v, lengths)?;
    let scale = score_scale(d);
    let mut out = vec![T::zero(); b * l * d];
    split_uniform(&mut out, b, l * d)
        .into_par_iter()
        .enumerate()
        .for_each(|(s, o)| {
            let n = lengths[s];
            let (qs, ks, vs) = (q.slab(s), k.slab(s), v.slab(s));
            let mut scores = vec![T::zero(); l * l];
            for i in 0..l {
                for j in 0..l {
                    let mut acc = 0.0f64;
                    for c in 0..d {
                        acc += qs[i * d + c].to_acc() * ks[j * d + c].to_acc();
                    }
                    scores[i * l + j] = T::from_acc(acc * scale);
                }
            }
            let mut probs = vec![T::zero(); l * l];
            for i in 0..n {
                let row = &scores[i * l..(i + 1) * l];
                let max = row[..n].iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.to_acc()));
                let sum: f64 = row[..n].iter().map(|v| (v.to_acc() - max).exp()).sum();
                for j in 0..n {
                    probs[i * l + j] = T::from_acc((row[j].to_acc() - max).exp() / sum);
                }
            }
            for i in 0..n {
                for c in 0..d {
                    let mut acc = 0.0f64;
                    for j in 0..l {
                        acc += probs[i * l + j].to_acc() * vs[j * d + c].to_acc();
                    }
                    o[i * d + c] = T::from_acc(acc);
                }
            }
        });
    Ok(DenseTensor::from_parts(vec![b, l, d], out))
}

/// Tiled attention on padded inputs with a key-padding mask.
///
/// Log-sum-exp is laid out `[B * L]`; padded rows and empty samples report `-inf`.
#[allow(clippy::type_complexity)]
pub fn dense_flash_attention<T: Scalar>(
    q: &DenseTensor<T>,
    k: &DenseTensor<T>,
    v: &DenseTensor<T>,
    lengths: &[usize],
    block_q: usize,
    block_k: usize,
) -> Result<(DenseTensor<T>, AttentionSaved<T, DenseTensor<T>>)> {
    if block_q == 0 || block_k == 0 {
        return Err(JaggedError::ZeroBlockSize);
    }
    let [b, l, d] = check_inputs(q, k, v, lengths)?;
    let mut out = vec![T::zero(); b * l * d];
    let mut lse = vec![T::neg_infinity(); b * l];
    split_uniform(&mut out, b, l * d)
        .into_par_iter()
        .zip(split_uniform(&mut lse, b, l))
        .enumerate()
        .for_each(|(s, (o, m))| {
            let n = lengths[s];
            flash_sample(
                q.slab(s),
                k.slab(s),
                v.slab(s),
                d,
                l,
                l,
                n,
                block_q,
                block_k,
                o,
                m,
                None,
            );
            o[n * d..].fill(T::zero());
            m[n..].fill(T::neg_infinity());
        });
    let output = DenseTensor::from_parts(vec![b, l, d], out);
    let saved = AttentionSaved {
        output: output.clone(),
        logsumexp: lse,
        block_q,
        block_k,
    };
    Ok((output, saved))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lengths::{random_dense, seeded_rng};
    use crate::scalar::max_rel_diff;

    #[test]
    fn flash_matches_naive_with_padding() {
        let mut rng = seeded_rng(4);
        let lengths = [5, 0, 1, 9];
        let q = random_dense::<f64>(&mut rng, vec![4, 9, 3]);
        let k = random_dense::<f64>(&mut rng, vec![4, 9, 3]);
        let v = random_dense::<f64>(&mut rng, vec![4, 9, 3]);
        let naive = dense_attention(&q, &k, &v, &lengths).unwrap();
        let (flash, saved) = dense_flash_attention(&q, &k, &v, &lengths, 2, 4).unwrap();
        assert!(max_rel_diff(flash.data(), naive.data()) < 1e-12);
        // padded rows of sample 0 and all of sample 1
        assert!(naive.slab(1).iter().all(|&x| x == 0.0));
        assert!(flash.slab(0)[5 * 3..].iter().all(|&x| x == 0.0));
        assert_eq!(saved.logsumexp[9], f64::NEG_INFINITY);
    }

    #[test]
    fn single_key_copies_value() {
        let q = DenseTensor::new(vec![1, 1, 2], vec![0.4, -1.0]).unwrap();
        let v = DenseTensor::new(vec![1, 1, 2], vec![7.0, 8.0]).unwrap();
        let out = dense_attention(&q, &q, &v, &[1]).unwrap();
        assert_eq!(out.data(), &[7.0, 8.0]);
    }
}
