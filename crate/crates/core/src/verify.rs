//! Correctness suites: jagged operators against their padded counterparts,
//! the four attention implementations against each other, and the gradient
//! checks. Used by the `check` CLI command and the acceptance tests.

use serde::{Deserialize, Serialize};

use crate::attention::{
    dense_attention, dense_flash_attention, jagged_attention, jagged_flash_attention_forward,
};
use crate::error::Result;
use crate::gradcheck::{self, ShapeSpec};
use crate::lengths::{random_dense, random_index, random_jagged, random_values, seeded_rng, FixtureRng};
use crate::linalg::{self, padded, Activation, MlpLayer};
use crate::ops::{Blocks, OpId};
use crate::scalar::{max_rel_diff, Scalar};
use crate::tensor::{
    dense_to_jagged, dense_to_jagged2, jagged2_to_dense, jagged_to_dense, Jagged2Tensor, JaggedTensor,
};

pub const ORACLE_TOL_F64: f64 = 1e-6;
pub const ORACLE_TOL_F32: f64 = 1e-5;
pub const CHAIN_TOL_F64: f64 = 1e-9;
pub const CHAIN_TOL_F32: f64 = 1e-5;

/// One named pass/fail measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub metric: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl CheckOutcome {
    pub fn below(name: impl Into<String>, metric: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            metric,
            threshold,
            pass: metric < threshold,
        }
    }
}

fn jagged2<T: Scalar>(rng: &mut FixtureRng, lengths: &[usize]) -> Jagged2Tensor<T> {
    let n = lengths.iter().map(|l| l * l).sum();
    Jagged2Tensor::new(lengths.to_vec(), random_values(rng, n, -1.0, 1.0)).expect("sized")
}

/// Two-layer MLP `D -> T (relu) -> T` with random parameters.
pub fn random_mlp<T: Scalar>(rng: &mut FixtureRng, dim: usize, t: usize) -> Vec<MlpLayer<T>> {
    crate::costmodel::mlp_widths(dim, t)
        .iter()
        .enumerate()
        .map(|(l, &(i, o))| {
            let act = if l == 0 { Activation::Relu } else { Activation::None };
            MlpLayer::new(random_dense(rng, vec![i, o]), random_values(rng, o, -0.5, 0.5), act).expect("sized")
        })
        .collect()
}

/// Relative error between a jagged operator and its padded reference on one random case.
pub fn oracle_error<T: Scalar>(op: OpId, spec: &ShapeSpec, seed: u64) -> Result<f64> {
    let mut rng = seeded_rng(seed);
    let (lengths, d, t) = (&spec.lengths, spec.dim, spec.t);
    let b = lengths.len();
    let l = lengths.iter().copied().max().unwrap_or(0);
    let zero = T::zero();
    let err = match op {
        OpId::JaggedDenseBmm => {
            let x = random_jagged::<T>(&mut rng, lengths, d);
            let w = random_dense::<T>(&mut rng, vec![b, d, t]);
            let got = linalg::jagged_dense_bmm(&x, &w)?;
            let want = dense_to_jagged(&padded::dense_bmm(&jagged_to_dense(&x, l, zero), &w, lengths)?, lengths)?;
            max_rel_diff(got.values(), want.values())
        }
        OpId::JaggedJaggedBmm => {
            let x = random_jagged::<T>(&mut rng, lengths, d);
            let y = random_jagged::<T>(&mut rng, lengths, t);
            let got = linalg::jagged_jagged_bmm(&x, &y)?;
            let want = padded::dense_transposed_bmm(&jagged_to_dense(&x, l, zero), &jagged_to_dense(&y, l, zero))?;
            max_rel_diff(got.data(), want.data())
        }
        OpId::JaggedSoftmax => {
            let x = random_jagged::<T>(&mut rng, lengths, d);
            let got = linalg::jagged_softmax(&x);
            let want = dense_to_jagged(&padded::dense_masked_softmax(&jagged_to_dense(&x, l, zero), lengths)?, lengths)?;
            max_rel_diff(got.values(), want.values())
        }
        OpId::JaggedJaggedBmmJaggedOut => {
            let q = random_jagged::<T>(&mut rng, lengths, d);
            let k = random_jagged::<T>(&mut rng, lengths, d);
            let got = linalg::jagged_jagged_bmm_jagged_out(&q, &k)?;
            let want = dense_to_jagged2(
                &padded::dense_scores(&jagged_to_dense(&q, l, zero), &jagged_to_dense(&k, l, zero))?,
                lengths,
            )?;
            max_rel_diff(got.values(), want.values())
        }
        OpId::ArrayJaggedBmmJaggedOut => {
            let a = jagged2::<T>(&mut rng, lengths);
            let v = random_jagged::<T>(&mut rng, lengths, d);
            let got = linalg::array_jagged_bmm_jagged_out(&a, &v)?;
            let want = dense_to_jagged(
                &padded::dense_apply_scores(&jagged2_to_dense(&a, l, zero), &jagged_to_dense(&v, l, zero), lengths)?,
                lengths,
            )?;
            max_rel_diff(got.values(), want.values())
        }
        OpId::Jagged2Softmax => {
            let s = jagged2::<T>(&mut rng, lengths);
            let got = linalg::jagged2_softmax(&s);
            let want = dense_to_jagged2(&padded::dense_masked_row_softmax(&jagged2_to_dense(&s, l, zero), lengths)?, lengths)?;
            max_rel_diff(got.values(), want.values())
        }
        OpId::JaggedMlp => {
            let x = random_jagged::<T>(&mut rng, lengths, d);
            let layers = random_mlp::<T>(&mut rng, d, t);
            let got = linalg::jagged_mlp(&x, &layers)?;
            let want = dense_to_jagged(&padded::dense_mlp(&jagged_to_dense(&x, l, zero), &layers, lengths)?, lengths)?;
            max_rel_diff(got.values(), want.values())
        }
        OpId::DenseAttention | OpId::DenseFlashAttention | OpId::JaggedAttention | OpId::JaggedFlashAttention => {
            let report = attention_chain::<T>(lengths, d, seed, Blocks::default())?;
            report.max_pairwise()
        }
    };
    Ok(err)
}

/// Random shape within the equivalence-suite envelope: `B <= 16`, `Bi <= 33`, `D, T <= 16`.
pub fn random_oracle_spec(rng: &mut FixtureRng) -> ShapeSpec {
    let b = random_index(rng, 1, 16);
    let lengths = (0..b).map(|_| random_index(rng, 0, 33)).collect();
    ShapeSpec::new(lengths, random_index(rng, 1, 16), random_index(rng, 1, 16))
}

pub fn oracle_suite<T: Scalar>(op: OpId, seed: u64, cases: usize) -> Result<Vec<CheckOutcome>> {
    let tol = if T::NAME == "f64" { ORACLE_TOL_F64 } else { ORACLE_TOL_F32 };
    let mut rng = seeded_rng(seed);
    (0..cases)
        .map(|case| {
            let spec = random_oracle_spec(&mut rng);
            let err = oracle_error::<T>(op, &spec, seed ^ (case as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))?;
            Ok(CheckOutcome::below(format!("oracle/{op}/{}/case{case}", T::NAME), err, tol))
        })
        .collect()
}

/// Outputs of all four attention implementations on one random case, compared pairwise.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainReport {
    /// `(left, right, relative error)` for every pair.
    pub pairs: Vec<(OpId, OpId, f64)>,
    /// Flash log-sum-exp against a direct `log sum exp(S / sqrt(D))`, absolute error.
    pub lse_error: f64,
}

impl ChainReport {
    pub fn max_pairwise(&self) -> f64 {
        self.pairs.iter().map(|p| p.2).fold(0.0, f64::max)
    }
}

pub fn attention_chain<T: Scalar>(lengths: &[usize], dim: usize, seed: u64, blocks: Blocks) -> Result<ChainReport> {
    let mut rng = seeded_rng(seed);
    let q = random_jagged::<T>(&mut rng, lengths, dim);
    let k = random_jagged::<T>(&mut rng, lengths, dim);
    let v = random_jagged::<T>(&mut rng, lengths, dim);
    let l = lengths.iter().copied().max().unwrap_or(0);
    let pad = |x: &JaggedTensor<T>| jagged_to_dense(x, l, T::zero());
    let (qd, kd, vd) = (pad(&q), pad(&k), pad(&v));

    let dense = dense_to_jagged(&dense_attention(&qd, &kd, &vd, lengths)?, lengths)?;
    let (dflash, dsaved) = dense_flash_attention(&qd, &kd, &vd, lengths, blocks.q, blocks.k)?;
    let dflash = dense_to_jagged(&dflash, lengths)?;
    let composed = jagged_attention(&q, &k, &v)?;
    let (jflash, jsaved) = jagged_flash_attention_forward(&q, &k, &v, blocks.q, blocks.k)?;

    let outs = [
        (OpId::DenseAttention, dense.values()),
        (OpId::DenseFlashAttention, dflash.values()),
        (OpId::JaggedAttention, composed.values()),
        (OpId::JaggedFlashAttention, jflash.values()),
    ];
    let mut pairs = Vec::with_capacity(6);
    for i in 0..outs.len() {
        for j in i + 1..outs.len() {
            pairs.push((outs[i].0, outs[j].0, max_rel_diff(outs[i].1, outs[j].1)));
        }
    }

    let scale = 1.0 / (dim as f64).sqrt();
    let mut lse_error = 0.0f64;
    for (s, &n) in lengths.iter().enumerate() {
        let (qs, ks) = (q.segment(s), k.segment(s));
        for r in 0..n {
            let scores: Vec<f64> = (0..n)
                .map(|c| (0..dim).map(|j| qs[r * dim + j].to_acc() * ks[c * dim + j].to_acc()).sum::<f64>() * scale)
                .collect();
            let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let want = m + scores.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            let row = q.offsets()[s] + r;
            lse_error = lse_error
                .max((jsaved.logsumexp[row].to_acc() - want).abs())
                .max((dsaved.logsumexp[s * l + r].to_acc() - want).abs());
        }
    }
    Ok(ChainReport { pairs, lse_error })
}

/// Runs oracle, chain and gradient suites for `op` (or every op) and returns one outcome per case.
pub fn run_checks(op: Option<OpId>, seed: u64) -> Result<Vec<CheckOutcome>> {
    let ops: Vec<OpId> = match op {
        Some(op) => vec![op],
        None => OpId::ALL.to_vec(),
    };
    let mut outcomes = Vec::new();
    let mut chain_done = false;
    for op in ops {
        if op.is_attention() {
            if !chain_done {
                outcomes.extend(chain_suite(seed, 12)?);
                chain_done = true;
            }
        } else {
            outcomes.extend(oracle_suite::<f64>(op, seed, 50)?);
            outcomes.extend(oracle_suite::<f32>(op, seed, 10)?);
        }
        if op.has_backward() {
            for (case, r) in gradcheck::check_suite(op, seed, 20, gradcheck::DEFAULT_TOLERANCE)?
                .into_iter()
                .enumerate()
            {
                outcomes.push(CheckOutcome {
                    name: format!("gradcheck/{op}/case{case}"),
                    metric: r.max_relative_error.min(r.max_absolute_error),
                    threshold: r.tolerance,
                    pass: r.pass,
                });
            }
        }
    }
    Ok(outcomes)
}

/// Attention equivalence over random shapes, both precisions and block edges `{1, 3, 64}`.
pub fn chain_suite(seed: u64, cases: usize) -> Result<Vec<CheckOutcome>> {
    let mut rng = seeded_rng(seed);
    let mut out = Vec::new();
    for case in 0..cases {
        let b = random_index(&mut rng, 1, 6);
        let lengths: Vec<usize> = (0..b)
            .map(|i| match i {
                0 => 0,
                1 => 1,
                _ => random_index(&mut rng, 0, 33),
            })
            .collect();
        let dim = random_index(&mut rng, 1, 16);
        for edge in [1, 3, 64] {
            let blocks = Blocks { q: edge, k: edge };
            let case_seed = seed.wrapping_add(case as u64 * 31 + edge as u64);
            let r64 = attention_chain::<f64>(&lengths, dim, case_seed, blocks)?;
            out.push(CheckOutcome::below(
                format!("chain/f64/case{case}/block{edge}"),
                r64.max_pairwise(),
                CHAIN_TOL_F64,
            ));
            out.push(CheckOutcome::below(
                format!("chain/lse/case{case}/block{edge}"),
                r64.lse_error,
                CHAIN_TOL_F64,
            ));
            let r32 = attention_chain::<f32>(&lengths, dim, case_seed, blocks)?;
            out.push(CheckOutcome::below(
                format!("chain/f32/case{case}/block{edge}"),
                r32.max_pairwise(),
                CHAIN_TOL_F32,
            ));
        }
    }
    Ok(out)
}
