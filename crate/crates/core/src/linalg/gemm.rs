//! Blocked matrix product shared by the per-segment kernels.
//!
//! Operands are packed into contiguous `f64` panels (A by rows, B by columns)
//! and the output is walked in `block x block` tiles. The contraction axis is
//! never split: every output element is a single ascending-index `f64` sum, so
//! results are bit-identical for any block edge.

use crate::scalar::Scalar;

/// Read-only strided matrix view.
#[derive(Clone, Copy)]
pub(crate) struct MatView<'a, T> {
    data: &'a [T],
    rows: usize,
    cols: usize,
    row_stride: usize,
    col_stride: usize,
}

impl<'a, T: Scalar> MatView<'a, T> {
    pub(crate) fn row_major(data: &'a [T], rows: usize, cols: usize) -> Self {
        debug_assert!(data.len() >= rows * cols);
        Self {
            data,
            rows,
            cols,
            row_stride: cols,
            col_stride: 1,
        }
    }

    pub(crate) fn t(self) -> Self {
        Self {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            row_stride: self.col_stride,
            col_stride: self.row_stride,
        }
    }

    #[inline(always)]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.row_stride + j * self.col_stride].to_acc()
    }

    fn pack_rows(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rows * self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.push(self.get(i, j));
            }
        }
        out
    }

    fn pack_cols(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rows * self.cols);
        for j in 0..self.cols {
            for i in 0..self.rows {
                out.push(self.get(i, j));
            }
        }
        out
    }
}

#[inline(always)]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// `out = alpha * (a @ b)` with `out` row-major `a.rows x b.cols`.
pub(crate) fn gemm<T: Scalar>(a: MatView<'_, T>, b: MatView<'_, T>, alpha: f64, out: &mut [T], block: usize) {
    gemm_with(a, b, out, block, |_, _, acc| alpha * acc);
}

/// Like [`gemm`], but every finished dot product passes through `epilogue(i, j, acc)`.
pub(crate) fn gemm_with<T: Scalar>(
    a: MatView<'_, T>,
    b: MatView<'_, T>,
    out: &mut [T],
    block: usize,
    epilogue: impl Fn(usize, usize, f64) -> f64,
) {
    debug_assert_eq!(a.cols, b.rows);
    let (m, n, k) = (a.rows, b.cols, a.cols);
    debug_assert_eq!(out.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let block = block.max(1);
    let ap = a.pack_rows();
    let bp = b.pack_cols();
    for i0 in (0..m).step_by(block) {
        let i1 = (i0 + block).min(m);
        for j0 in (0..n).step_by(block) {
            let j1 = (j0 + block).min(n);
            for i in i0..i1 {
                let arow = &ap[i * k..(i + 1) * k];
                for j in j0..j1 {
                    let acc = dot(arow, &bp[j * k..(j + 1) * k]);
                    out[i * n + j] = T::from_acc(epilogue(i, j, acc));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_naive_and_transposes() {
        let a: Vec<f64> = (0..6).map(|v| v as f64 - 2.5).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|v| (v as f64).sin()).collect(); // 3x4
        let mut out = vec![0.0; 8];
        gemm(MatView::row_major(&a, 2, 3), MatView::row_major(&b, 3, 4), 1.0, &mut out, 3);
        for i in 0..2 {
            for j in 0..4 {
                let want: f64 = (0..3).map(|k| a[i * 3 + k] * b[k * 4 + j]).sum();
                assert!((out[i * 4 + j] - want).abs() < 1e-14);
            }
        }
        // (a^T)^T a = a a^T via transposed views
        let mut g1 = vec![0.0; 4];
        let mut g2 = vec![0.0; 4];
        let av = MatView::row_major(&a, 2, 3);
        gemm(av, av.t(), 1.0, &mut g1, 1);
        gemm(av.t().t(), av.t(), 1.0, &mut g2, 64);
        assert_eq!(g1, g2);
    }

    #[test]
    fn empty_contraction_is_zero() {
        let a: Vec<f32> = vec![];
        let mut out = vec![5.0f32; 4];
        gemm(MatView::row_major(&a, 2, 0), MatView::row_major(&a, 0, 2), 1.0, &mut out, 4);
        assert_eq!(out, vec![0.0; 4]);
    }
}
