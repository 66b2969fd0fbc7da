//! Jagged, jagged² and dense tensor layouts.
//!
//! A [`JaggedTensor`] holds a batch of variable-length sequences of `dim`-wide
//! rows in one contiguous buffer; `offsets[i]..offsets[i + 1]` are the rows of
//! sample `i`. A [`Jagged2Tensor`] holds one square `Bi x Bi` block per sample
//! (attention scores). [`DenseTensor`] is a plain row-major array used for
//! padded baselines and per-sample weights.
//!
//! All three are immutable after construction.

mod convert;
mod elementwise;
mod fixture;

pub use convert::{dense_to_jagged, dense_to_jagged2, jagged2_to_dense, jagged_to_dense};
pub use elementwise::{add, map_unary, mul, negate, scale, sub};
pub use fixture::{from_json, to_json};

use crate::error::{JaggedError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct JaggedTensor<T> {
    dim: usize,
    offsets: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> JaggedTensor<T> {
    /// Builds a tensor from raw offsets, validating every layout invariant.
    pub fn new(dim: usize, offsets: Vec<usize>, values: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(JaggedError::ShapeMismatch("jagged dim must be positive".into()));
        }
        validate_offsets(&offsets)?;
        let expected = offsets[offsets.len() - 1] * dim;
        if values.len() != expected {
            return Err(JaggedError::SizeMismatch {
                expected,
                actual: values.len(),
            });
        }
        Ok(Self {
            dim,
            offsets,
            values,
        })
    }

    /// Builds a tensor from per-sample lengths; offsets are their prefix sums.
    pub fn from_lengths(lengths: &[usize], values: Vec<T>, dim: usize) -> Result<Self> {
        Self::new(dim, offsets_from_lengths(lengths), values)
    }

    pub fn zeros(dim: usize, offsets: Vec<usize>) -> Result<Self> {
        validate_offsets(&offsets)?;
        let n = offsets[offsets.len() - 1] * dim;
        Self::new(dim, offsets, vec![T::zero(); n])
    }

    /// Internal constructor for kernels that derive the layout from a validated input.
    pub(crate) fn from_parts(dim: usize, offsets: Vec<usize>, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), offsets[offsets.len() - 1] * dim);
        Self {
            dim,
            offsets,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// Number of samples `B`.
    pub fn batch(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Total row count `sum_B`.
    pub fn total_rows(&self) -> usize {
        self.offsets[self.offsets.len() - 1]
    }

    pub fn segment_len(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn max_len(&self) -> usize {
        self.offsets.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0)
    }

    /// Rows of sample `i`, flattened row-major (`Bi * dim` elements).
    pub fn segment(&self, i: usize) -> &[T] {
        &self.values[self.offsets[i] * self.dim..self.offsets[i + 1] * self.dim]
    }

    /// Same values, different buffer; layout is kept.
    pub fn with_values(&self, values: Vec<T>) -> Result<Self> {
        Self::new(self.dim, self.offsets.clone(), values)
    }

    /// Checks that `other` has identical offsets, reporting the first differing sample.
    pub fn check_same_offsets<U: Scalar>(&self, other: &JaggedTensor<U>) -> Result<()> {
        check_offsets_match(&self.offsets, &other.offsets)
    }

    pub fn check_same_layout<U: Scalar>(&self, other: &JaggedTensor<U>) -> Result<()> {
        self.check_same_offsets(other)?;
        if self.dim != other.dim {
            return Err(JaggedError::ShapeMismatch(format!(
                "dim {} vs {}",
                self.dim, other.dim
            )));
        }
        Ok(())
    }
}

/// Batch of per-sample square `Bi x Bi` blocks stored back to back.
#[derive(Debug, Clone, PartialEq)]
pub struct Jagged2Tensor<T> {
    seq_lengths: Vec<usize>,
    sq_offsets: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> Jagged2Tensor<T> {
    pub fn new(seq_lengths: Vec<usize>, values: Vec<T>) -> Result<Self> {
        let sq_offsets = square_offsets(&seq_lengths);
        let expected = sq_offsets[sq_offsets.len() - 1];
        if values.len() != expected {
            return Err(JaggedError::SizeMismatch {
                expected,
                actual: values.len(),
            });
        }
        Ok(Self {
            seq_lengths,
            sq_offsets,
            values,
        })
    }

    pub fn zeros(seq_lengths: Vec<usize>) -> Self {
        let sq_offsets = square_offsets(&seq_lengths);
        let n = sq_offsets[sq_offsets.len() - 1];
        Self {
            seq_lengths,
            sq_offsets,
            values: vec![T::zero(); n],
        }
    }

    pub(crate) fn from_parts(seq_lengths: Vec<usize>, values: Vec<T>) -> Self {
        let sq_offsets = square_offsets(&seq_lengths);
        debug_assert_eq!(values.len(), sq_offsets[sq_offsets.len() - 1]);
        Self {
            seq_lengths,
            sq_offsets,
            values,
        }
    }

    pub fn seq_lengths(&self) -> &[usize] {
        &self.seq_lengths
    }

    pub fn sq_offsets(&self) -> &[usize] {
        &self.sq_offsets
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn batch(&self) -> usize {
        self.seq_lengths.len()
    }

    /// Block `i` as a row-major `Bi x Bi` slice.
    pub fn block(&self, i: usize) -> &[T] {
        &self.values[self.sq_offsets[i]..self.sq_offsets[i + 1]]
    }

    pub fn with_values(&self, values: Vec<T>) -> Result<Self> {
        Self::new(self.seq_lengths.clone(), values)
    }

    pub fn check_same_lengths(&self, lengths: &[usize]) -> Result<()> {
        if self.seq_lengths.len() != lengths.len() {
            return Err(JaggedError::ShapeMismatch(format!(
                "batch {} vs {}",
                self.seq_lengths.len(),
                lengths.len()
            )));
        }
        match self.seq_lengths.iter().zip(lengths).position(|(a, b)| a != b) {
            Some(sample) => Err(JaggedError::SegmentMismatch { sample }),
            None => Ok(()),
        }
    }
}

/// Row-major rank-2 or rank-3 array.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> DenseTensor<T> {
    /// Zero-sized axes are accepted so that `max_len = 0` densification is total.
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if !(2..=3).contains(&shape.len()) {
            return Err(JaggedError::ShapeMismatch(format!(
                "dense tensor must have rank 2 or 3, got {}",
                shape.len()
            )));
        }
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(JaggedError::SizeMismatch {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let n = shape.iter().product();
        Self::new(shape, vec![T::zero(); n])
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), shape.iter().product::<usize>());
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Returns `[B, R, C]`, failing unless the tensor has rank 3.
    pub fn dims3(&self) -> Result<[usize; 3]> {
        match *self.shape.as_slice() {
            [b, r, c] => Ok([b, r, c]),
            _ => Err(JaggedError::ShapeMismatch(format!(
                "expected rank-3 tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn dims2(&self) -> Result<[usize; 2]> {
        match *self.shape.as_slice() {
            [r, c] => Ok([r, c]),
            _ => Err(JaggedError::ShapeMismatch(format!(
                "expected rank-2 tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    /// Slice `i` along the leading axis of a rank-3 tensor.
    pub fn slab(&self, i: usize) -> &[T] {
        let per: usize = self.shape[1..].iter().product();
        &self.data[i * per..(i + 1) * per]
    }

    pub fn with_data(&self, data: Vec<T>) -> Result<Self> {
        Self::new(self.shape.clone(), data)
    }
}

pub fn offsets_from_lengths(lengths: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(lengths.len() + 1);
    offsets.push(0);
    let mut acc = 0usize;
    for &l in lengths {
        acc += l;
        offsets.push(acc);
    }
    offsets
}

fn square_offsets(lengths: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(lengths.len() + 1);
    offsets.push(0);
    let mut acc = 0usize;
    for &l in lengths {
        acc += l * l;
        offsets.push(acc);
    }
    offsets
}

fn validate_offsets(offsets: &[usize]) -> Result<()> {
    match offsets.first() {
        None => return Err(JaggedError::InvalidOffsets("offsets must have length B + 1".into())),
        Some(&o) if o != 0 => {
            return Err(JaggedError::InvalidOffsets(format!(
                "offsets[0] must be 0, got {o}"
            )))
        }
        _ => {}
    }
    if let Some(i) = offsets.windows(2).position(|w| w[1] < w[0]) {
        return Err(JaggedError::InvalidOffsets(format!(
            "offsets decrease at sample {i}: {} > {}",
            offsets[i],
            offsets[i + 1]
        )));
    }
    Ok(())
}

pub(crate) fn check_offsets_match(a: &[usize], b: &[usize]) -> Result<()> {
    // first sample whose end offset differs; a length mismatch fails at the shorter batch
    let first_diff = a.iter().zip(b).skip(1).position(|(x, y)| x != y);
    match first_diff {
        Some(sample) => Err(JaggedError::SegmentMismatch { sample }),
        None if a.len() != b.len() => Err(JaggedError::SegmentMismatch {
            sample: a.len().min(b.len()) - 1,
        }),
        None => Ok(()),
    }
}

/// Splits a flat buffer into disjoint mutable per-segment chunks.
pub(crate) fn split_by_offsets<'a, T>(
    mut buf: &'a mut [T],
    offsets: &[usize],
    width: usize,
) -> Vec<&'a mut [T]> {
    let mut out = Vec::with_capacity(offsets.len().saturating_sub(1));
    for w in offsets.windows(2) {
        let (head, tail) = buf.split_at_mut((w[1] - w[0]) * width);
        out.push(head);
        buf = tail;
    }
    out
}

/// Splits a flat buffer into equal-sized mutable chunks, one per sample.
pub(crate) fn split_uniform<T>(buf: &mut [T], count: usize, per: usize) -> Vec<&mut [T]> {
    if per == 0 {
        return (0..count).map(|_| <&mut [T]>::default()).collect();
    }
    buf.chunks_mut(per).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn make_jagged_prefix_sums() {
        let x = JaggedTensor::from_lengths(&[2, 1], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 2).unwrap();
        assert_eq!(x.offsets(), &[0, 2, 3]);
        assert_eq!(x.segment(0), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(x.segment(1), &[5.0, 6.0]);
    }

    #[test]
    fn make_jagged_all_empty() {
        let x = JaggedTensor::<f64>::from_lengths(&[0, 0], vec![], 4).unwrap();
        assert_eq!(x.offsets(), &[0, 0, 0]);
        assert!(x.values().is_empty());
        assert_eq!(x.segment(1), &[] as &[f64]);
    }

    #[test]
    fn make_jagged_size_mismatch() {
        let err = JaggedTensor::from_lengths(&[3], vec![1.0f64, 2.0], 1).unwrap_err();
        assert_eq!(
            err,
            JaggedError::SizeMismatch {
                expected: 3,
                actual: 2
            }
        );
        assert!(err.to_string().contains("expected 3"));
    }

    #[test]
    fn rejects_bad_offsets() {
        assert!(JaggedTensor::<f32>::new(1, vec![1, 2], vec![0.0]).is_err());
        assert!(JaggedTensor::<f32>::new(1, vec![0, 2, 1], vec![0.0]).is_err());
        assert!(JaggedTensor::<f32>::new(1, vec![], vec![]).is_err());
    }

    #[test]
    fn offset_mismatch_reports_first_sample() {
        let a = JaggedTensor::<f64>::zeros(1, vec![0, 2]).unwrap();
        let b = JaggedTensor::<f64>::zeros(1, vec![0, 1, 2]).unwrap();
        assert_eq!(
            a.check_same_offsets(&b),
            Err(JaggedError::SegmentMismatch { sample: 0 })
        );
        let c = JaggedTensor::<f64>::zeros(1, vec![0, 1, 3, 3]).unwrap();
        let d = JaggedTensor::<f64>::zeros(1, vec![0, 1, 2, 3]).unwrap();
        assert_eq!(
            c.check_same_offsets(&d),
            Err(JaggedError::SegmentMismatch { sample: 1 })
        );
    }

    #[test]
    fn jagged2_blocks() {
        let s = Jagged2Tensor::new(vec![1, 2, 0], vec![7.0f64, 1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.sq_offsets(), &[0, 1, 5, 5]);
        assert_eq!(s.block(1), &[1.0, 2.0, 3.0, 4.0]);
        assert!(s.block(2).is_empty());
        assert!(Jagged2Tensor::new(vec![2], vec![1.0f64]).is_err());
    }

    #[test]
    fn dense_rank_checked() {
        assert!(DenseTensor::new(vec![4], vec![0.0f32; 4]).is_err());
        assert!(DenseTensor::new(vec![2, 2], vec![0.0f32; 3]).is_err());
        let d = DenseTensor::new(vec![2, 0, 3], Vec::<f32>::new()).unwrap();
        assert_eq!(d.dims3().unwrap(), [2, 0, 3]);
    }
}
