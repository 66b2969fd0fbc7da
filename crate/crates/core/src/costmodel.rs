//! Analytic FLOP and byte counts for jagged and padded execution.
//!
//! FLOP convention: a multiply-add is 2 FLOPs; `exp`, `div`, `max`, `sub`
//! and `log` are 1 each. Byte counts are logical tensor traffic:
//! `element_bytes * (inputs + outputs + peak intermediates)`. Allocator
//! overhead, offsets arrays and gradients are not counted.
//!
//! For attention ids the "jagged" column is the jagged-layout variant and the
//! "padded" column the padded-layout variant of the same algorithm family:
//! `dense_attention` / `jagged_attention` are the materializing family,
//! `dense_flash_attention` / `jagged_flash_attention` the tiled family.

use serde::{Deserialize, Serialize};

use crate::attention::{DEFAULT_BLOCK_K, DEFAULT_BLOCK_Q};
use crate::error::{JaggedError, Result};
use crate::lengths::{gen_lengths, LengthDistribution};
use crate::ops::OpId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpConfig {
    pub op: OpId,
    pub dim: usize,
    /// Output width `T` of the bmm and MLP kernels.
    pub t: usize,
    pub lengths: Vec<usize>,
    /// Padded sequence length; `None` pads to the longest segment.
    pub padded_len: Option<usize>,
    pub element_bytes: usize,
    pub block_q: usize,
    pub block_k: usize,
}

impl OpConfig {
    pub fn new(op: OpId, dim: usize, t: usize, lengths: Vec<usize>) -> Self {
        Self {
            op,
            dim,
            t,
            lengths,
            padded_len: None,
            element_bytes: 4,
            block_q: DEFAULT_BLOCK_Q,
            block_k: DEFAULT_BLOCK_K,
        }
    }

    pub fn with_padded_len(mut self, max_len: usize) -> Self {
        self.padded_len = Some(max_len);
        self
    }

    pub fn with_element_bytes(mut self, bytes: usize) -> Self {
        self.element_bytes = bytes;
        self
    }

    pub fn with_blocks(mut self, block_q: usize, block_k: usize) -> Self {
        self.block_q = block_q;
        self.block_k = block_k;
        self
    }

    pub fn batch(&self) -> usize {
        self.lengths.len()
    }

    pub fn max_len(&self) -> usize {
        self.padded_len
            .unwrap_or_else(|| self.lengths.iter().copied().max().unwrap_or(0))
    }

    pub fn sum_b(&self) -> u64 {
        self.lengths.iter().map(|&l| l as u64).sum()
    }

    pub fn sum_sq(&self) -> u64 {
        self.lengths.iter().map(|&l| (l as u64) * (l as u64)).sum()
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.t == 0 || self.element_bytes == 0 || self.lengths.is_empty() {
            return Err(JaggedError::ShapeMismatch(
                "cost config needs positive dim, t, element_bytes and batch".into(),
            ));
        }
        if self.block_q == 0 || self.block_k == 0 {
            return Err(JaggedError::ZeroBlockSize);
        }
        let max_len = self.max_len();
        match self.lengths.iter().position(|&l| l > max_len) {
            Some(sample) => Err(JaggedError::LengthOutOfBounds {
                sample,
                length: self.lengths[sample],
                max_len,
            }),
            None => Ok(()),
        }
    }
}

/// Counts for one layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Shape {
    /// Σ rows.
    rows: u64,
    /// Σ rows² (score entries).
    sq: u64,
    /// Σ rows · ceil(rows / block_k) (online-softmax rescale points).
    rescales: u64,
    /// Longest sequence; flash tiles never exceed it.
    longest: u64,
}

fn layouts(cfg: &OpConfig) -> (Shape, Shape) {
    let bk = cfg.block_k as u64;
    let jagged = Shape {
        rows: cfg.sum_b(),
        sq: cfg.sum_sq(),
        rescales: cfg.lengths.iter().map(|&l| l as u64 * (l as u64).div_ceil(bk)).sum(),
        longest: cfg.lengths.iter().copied().max().unwrap_or(0) as u64,
    };
    let (b, l) = (cfg.batch() as u64, cfg.max_len() as u64);
    let padded = Shape {
        rows: b * l,
        sq: b * l * l,
        rescales: b * l * l.div_ceil(bk),
        longest: l,
    };
    (jagged, padded)
}

/// `(d_in, d_out)` of the two MLP layers used for cost and benchmarking: `D -> T` (relu), `T -> T`.
pub fn mlp_widths(dim: usize, t: usize) -> [(usize, usize); 2] {
    [(dim, t), (t, t)]
}

fn flops_for(op: OpId, cfg: &OpConfig, s: Shape) -> u64 {
    let (d, t) = (cfg.dim as u64, cfg.t as u64);
    match op {
        OpId::JaggedDenseBmm | OpId::JaggedJaggedBmm => 2 * s.rows * d * t,
        OpId::JaggedJaggedBmmJaggedOut | OpId::ArrayJaggedBmmJaggedOut => 2 * s.sq * d,
        // max, sub+exp, sum, div
        OpId::JaggedSoftmax => 4 * s.rows * d,
        OpId::Jagged2Softmax => 4 * s.sq,
        OpId::JaggedMlp => {
            let per_row: u64 = mlp_widths(cfg.dim, cfg.t)
                .iter()
                .enumerate()
                .map(|(l, &(i, o))| {
                    let (i, o) = (i as u64, o as u64);
                    // matmul + bias, plus relu on hidden layers
                    2 * i * o + o + if l == 0 { o } else { 0 }
                })
                .sum();
            per_row * s.rows
        }
        OpId::DenseAttention | OpId::JaggedAttention => 2 * s.sq * d + 4 * s.sq + 2 * s.sq * d,
        OpId::DenseFlashAttention | OpId::JaggedFlashAttention => {
            let matmuls = 4 * s.sq * d;
            let softmax = 4 * s.sq;
            // alpha = exp(m - m'), then acc (D) and l (1) rescaled
            let rescale = s.rescales * (2 + d + 1);
            // acc / l, then m + ln l
            let finalize = s.rows * (d + 2);
            matmuls + softmax + rescale + finalize
        }
    }
}

/// Element counts `(inputs + outputs, intermediates)`.
fn elements_for(op: OpId, cfg: &OpConfig, s: Shape) -> (u64, u64) {
    let (b, d, t) = (cfg.batch() as u64, cfg.dim as u64, cfg.t as u64);
    match op {
        OpId::JaggedDenseBmm => (s.rows * d + b * d * t + s.rows * t, 0),
        OpId::JaggedJaggedBmm => (s.rows * d + s.rows * t + b * d * t, 0),
        OpId::JaggedSoftmax => (2 * s.rows * d, 0),
        OpId::JaggedJaggedBmmJaggedOut => (2 * s.rows * d + s.sq, 0),
        OpId::ArrayJaggedBmmJaggedOut => (s.sq + 2 * s.rows * d, 0),
        OpId::Jagged2Softmax => (2 * s.sq, 0),
        OpId::JaggedMlp => {
            let widths = mlp_widths(cfg.dim, cfg.t);
            let params: u64 = widths.iter().map(|&(i, o)| (i * o + o) as u64).sum();
            (s.rows * d + s.rows * t + params, s.rows * t)
        }
        // q, k, v, out + scores and probabilities
        OpId::DenseAttention | OpId::JaggedAttention => (4 * s.rows * d, 2 * s.sq),
        // q, k, v, out + one tile clamped to the longest sequence + saved log-sum-exp
        OpId::DenseFlashAttention | OpId::JaggedFlashAttention => {
            let bq = (cfg.block_q as u64).min(s.longest);
            let bk = (cfg.block_k as u64).min(s.longest);
            (4 * s.rows * d, flash_tile_elements(bq, bk, d) + s.rows)
        }
    }
}

/// Scratch elements of one flash tile: scores, accumulator rows and running sums.
pub fn flash_tile_elements(block_q: u64, block_k: u64, dim: u64) -> u64 {
    block_q * block_k + block_q * dim + block_q
}

/// `(jagged, padded)` FLOPs.
pub fn flops_of(cfg: &OpConfig) -> Result<(u64, u64)> {
    cfg.validate()?;
    let (j, p) = layouts(cfg);
    Ok((flops_for(cfg.op, cfg, j), flops_for(cfg.op, cfg, p)))
}

/// `(jagged, padded)` bytes.
pub fn bytes_of(cfg: &OpConfig) -> Result<(u64, u64)> {
    cfg.validate()?;
    let (j, p) = layouts(cfg);
    let eb = cfg.element_bytes as u64;
    let total = |s| {
        let (io, scratch) = elements_for(cfg.op, cfg, s);
        eb * (io + scratch)
    };
    Ok((total(j), total(p)))
}

/// `(jagged, padded)` intermediate bytes only.
pub fn intermediate_bytes_of(cfg: &OpConfig) -> Result<(u64, u64)> {
    cfg.validate()?;
    let (j, p) = layouts(cfg);
    let eb = cfg.element_bytes as u64;
    Ok((eb * elements_for(cfg.op, cfg, j).1, eb * elements_for(cfg.op, cfg, p).1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub op: OpId,
    pub max_len: usize,
    pub flops_jagged: u64,
    pub flops_padded: u64,
    pub bytes_jagged: u64,
    pub bytes_padded: u64,
    pub ratio_flops: f64,
    pub ratio_bytes: f64,
}

/// `padded / jagged`; 1 when both are zero.
pub fn ratio(padded: u64, jagged: u64) -> f64 {
    match (padded, jagged) {
        (0, 0) => 1.0,
        (_, 0) => f64::INFINITY,
        (p, j) => p as f64 / j as f64,
    }
}

pub fn cost_report(cfg: &OpConfig) -> Result<CostReport> {
    let (flops_jagged, flops_padded) = flops_of(cfg)?;
    let (bytes_jagged, bytes_padded) = bytes_of(cfg)?;
    Ok(CostReport {
        op: cfg.op,
        max_len: cfg.max_len(),
        flops_jagged,
        flops_padded,
        bytes_jagged,
        bytes_padded,
        ratio_flops: ratio(flops_padded, flops_jagged),
        ratio_bytes: ratio(bytes_padded, bytes_jagged),
    })
}

/// One report per grid point; lengths are redrawn from `dist` (same seed) at each `max_len`,
/// and padding is to the grid value.
pub fn sweep_cost(
    op: OpId,
    batch: usize,
    dim: usize,
    t: usize,
    dist: &LengthDistribution,
    max_len_grid: &[usize],
) -> Result<Vec<CostReport>> {
    max_len_grid
        .iter()
        .map(|&max_len| {
            let lengths = gen_lengths(&dist.with_max_len(max_len), batch);
            cost_report(&OpConfig::new(op, dim, t, lengths).with_padded_len(max_len))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lengths::LengthKind;

    #[test]
    fn no_padding_waste_gives_unit_ratio() {
        let cfg = OpConfig::new(OpId::JaggedDenseBmm, 8, 4, vec![16; 5]);
        let r = cost_report(&cfg).unwrap();
        assert_eq!(r.ratio_flops, 1.0);
        assert_eq!(r.ratio_bytes, 1.0);
    }

    #[test]
    fn scores_single_sample_enumeration() {
        // 3x2 times 2x3: 9 outputs, 2 multiply-adds each
        let cfg = OpConfig::new(OpId::JaggedJaggedBmmJaggedOut, 2, 1, vec![3]);
        assert_eq!(flops_of(&cfg).unwrap().0, 36);
    }

    #[test]
    fn softmax_bytes_ratio_is_padding_ratio() {
        let cfg = OpConfig::new(OpId::JaggedSoftmax, 16, 1, vec![3, 5, 0, 8]).with_padded_len(8);
        let r = cost_report(&cfg).unwrap();
        assert_eq!(r.ratio_bytes, 32.0 / 16.0);
    }

    #[test]
    fn flash_equals_naive_up_to_tile_at_unit_lengths() {
        let lengths = vec![1; 40];
        let naive = bytes_of(&OpConfig::new(OpId::JaggedAttention, 8, 1, lengths.clone())).unwrap().0;
        let flash = bytes_of(&OpConfig::new(OpId::JaggedFlashAttention, 8, 1, lengths)).unwrap().0;
        // naive keeps two 1x1 score entries per row, flash one log-sum-exp
        let slack = 4 * (flash_tile_elements(1, 1, 8) + 40);
        assert!(naive.abs_diff(flash) <= slack, "{naive} vs {flash}");
    }

    #[test]
    fn rejects_bad_configs() {
        let cfg = OpConfig::new(OpId::JaggedSoftmax, 4, 1, vec![9]).with_padded_len(8);
        assert!(matches!(flops_of(&cfg), Err(JaggedError::LengthOutOfBounds { .. })));
        let cfg = OpConfig::new(OpId::JaggedSoftmax, 0, 1, vec![1]);
        assert!(bytes_of(&cfg).is_err());
    }

    #[test]
    fn sweep_fixed_bmm_is_flat() {
        let dist = LengthDistribution::new(LengthKind::Fixed, 0, 1);
        for op in [OpId::JaggedDenseBmm, OpId::JaggedJaggedBmm] {
            for r in sweep_cost(op, 8, 16, 16, &dist, &[256, 512, 1024]).unwrap() {
                assert_eq!(r.ratio_bytes, 1.0);
                assert_eq!(r.ratio_flops, 1.0);
            }
        }
    }
}
