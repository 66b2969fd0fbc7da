//! Conversions between jagged and padded dense layouts.

use super::{DenseTensor, Jagged2Tensor, JaggedTensor};
use crate::error::{JaggedError, Result};
use crate::scalar::Scalar;

/// Pads (or truncates) every segment to `max_len` rows, producing `[B, max_len, D]`.
///
/// Segments longer than `max_len` are truncated.
pub fn jagged_to_dense<T: Scalar>(x: &JaggedTensor<T>, max_len: usize, pad: T) -> DenseTensor<T> {
    let (b, d) = (x.batch(), x.dim());
    let mut data = vec![pad; b * max_len * d];
    for i in 0..b {
        let rows = x.segment_len(i).min(max_len);
        let src = &x.segment(i)[..rows * d];
        data[i * max_len * d..i * max_len * d + rows * d].copy_from_slice(src);
    }
    DenseTensor::from_parts(vec![b, max_len, d], data)
}

/// Gathers the first `lengths[i]` rows of each `[max_len, D]` slab.
pub fn dense_to_jagged<T: Scalar>(d: &DenseTensor<T>, lengths: &[usize]) -> Result<JaggedTensor<T>> {
    let [b, max_len, dim] = d.dims3()?;
    if lengths.len() != b {
        return Err(JaggedError::ShapeMismatch(format!(
            "{} lengths for a batch of {b}",
            lengths.len()
        )));
    }
    if dim == 0 {
        return Err(JaggedError::ShapeMismatch("dense inner dim is 0".into()));
    }
    check_bounds(lengths, max_len)?;
    let mut values = Vec::with_capacity(lengths.iter().sum::<usize>() * dim);
    for (i, &l) in lengths.iter().enumerate() {
        values.extend_from_slice(&d.slab(i)[..l * dim]);
    }
    JaggedTensor::from_lengths(lengths, values, dim)
}

/// Places each `Bi x Bi` block in the top-left corner of a `[max_len, max_len]` slab.
pub fn jagged2_to_dense<T: Scalar>(s: &Jagged2Tensor<T>, max_len: usize, pad: T) -> DenseTensor<T> {
    let b = s.batch();
    let mut data = vec![pad; b * max_len * max_len];
    for i in 0..b {
        let n = s.seq_lengths()[i];
        let keep = n.min(max_len);
        let block = s.block(i);
        let slab = &mut data[i * max_len * max_len..(i + 1) * max_len * max_len];
        for r in 0..keep {
            slab[r * max_len..r * max_len + keep].copy_from_slice(&block[r * n..r * n + keep]);
        }
    }
    DenseTensor::from_parts(vec![b, max_len, max_len], data)
}

pub fn dense_to_jagged2<T: Scalar>(d: &DenseTensor<T>, lengths: &[usize]) -> Result<Jagged2Tensor<T>> {
    let [b, rows, cols] = d.dims3()?;
    if rows != cols {
        return Err(JaggedError::ShapeMismatch(format!(
            "jagged² source must be square per sample, got {rows}x{cols}"
        )));
    }
    if lengths.len() != b {
        return Err(JaggedError::ShapeMismatch(format!(
            "{} lengths for a batch of {b}",
            lengths.len()
        )));
    }
    check_bounds(lengths, rows)?;
    let mut values = Vec::with_capacity(lengths.iter().map(|l| l * l).sum());
    for (i, &n) in lengths.iter().enumerate() {
        let slab = d.slab(i);
        for r in 0..n {
            values.extend_from_slice(&slab[r * rows..r * rows + n]);
        }
    }
    Jagged2Tensor::new(lengths.to_vec(), values)
}

fn check_bounds(lengths: &[usize], max_len: usize) -> Result<()> {
    match lengths.iter().position(|&l| l > max_len) {
        Some(sample) => Err(JaggedError::LengthOutOfBounds {
            sample,
            length: lengths[sample],
            max_len,
        }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pads_short_segments() {
        let x = JaggedTensor::new(1, vec![0, 2, 3], vec![1.0f64, 2.0, 3.0]).unwrap();
        let d = jagged_to_dense(&x, 2, 0.0);
        assert_eq!(d.shape(), &[2, 2, 1]);
        assert_eq!(d.data(), &[1.0, 2.0, 3.0, 0.0]);
    }

    #[test]
    fn truncates_long_segments() {
        let x = JaggedTensor::new(1, vec![0, 3], vec![1.0f64, 2.0, 3.0]).unwrap();
        let d = jagged_to_dense(&x, 2, 0.0);
        assert_eq!(d.shape(), &[1, 2, 1]);
        assert_eq!(d.data(), &[1.0, 2.0]);
    }

    #[test]
    fn zero_max_len() {
        let x = JaggedTensor::new(3, vec![0, 1, 2], vec![1.0f32; 6]).unwrap();
        let d = jagged_to_dense(&x, 0, 9.0);
        assert_eq!(d.shape(), &[2, 0, 3]);
        assert!(d.data().is_empty());
    }

    #[test]
    fn dense_back_to_jagged() {
        let d = DenseTensor::new(vec![2, 2, 1], vec![1.0f64, 2.0, 3.0, 0.0]).unwrap();
        let x = dense_to_jagged(&d, &[2, 1]).unwrap();
        assert_eq!(x.offsets(), &[0, 2, 3]);
        assert_eq!(x.values(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn dense_to_jagged_bounds() {
        let d = DenseTensor::new(vec![1, 2, 1], vec![1.0f64, 2.0]).unwrap();
        assert_eq!(
            dense_to_jagged(&d, &[3]),
            Err(JaggedError::LengthOutOfBounds {
                sample: 0,
                length: 3,
                max_len: 2
            })
        );
    }

    #[test]
    fn jagged2_single_block() {
        let s = Jagged2Tensor::new(vec![1], vec![7.0f64]).unwrap();
        let d = jagged2_to_dense(&s, 2, 0.0);
        assert_eq!(d.data(), &[7.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn jagged2_empty_sample_is_all_pad() {
        let s = Jagged2Tensor::new(vec![0, 1], vec![5.0f64]).unwrap();
        let d = jagged2_to_dense(&s, 2, -1.0);
        assert_eq!(d.slab(0), &[-1.0; 4]);
        assert_eq!(d.slab(1), &[5.0, -1.0, -1.0, -1.0]);
    }

    #[test]
    fn jagged2_round_trip() {
        let s = Jagged2Tensor::new(vec![2, 0, 1], vec![1.0f64, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let d = jagged2_to_dense(&s, 3, 0.5);
        let back = dense_to_jagged2(&d, &[2, 0, 1]).unwrap();
        assert_eq!(back, s);
        assert!(dense_to_jagged2(&d, &[4, 0, 0]).is_err());
    }
}
