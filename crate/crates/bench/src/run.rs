use std::hint::black_box;
use std::time::Instant;

use jagged_core::attention::{dense_attention, dense_flash_attention, jagged_attention, jagged_flash_attention_forward};
use jagged_core::costmodel::{cost_report, OpConfig};
use jagged_core::lengths::{gen_lengths, random_dense, random_jagged, random_values, seeded_rng};
use jagged_core::linalg::{self, padded};
use jagged_core::tensor::{dense_to_jagged, dense_to_jagged2, jagged2_to_dense, jagged_to_dense};
use jagged_core::verify::random_mlp;
use jagged_core::{max_rel_diff, DenseTensor, Jagged2Tensor, JaggedTensor, OpId, Scalar};

use crate::config::{BenchConfig, Precision};
use crate::record::{BenchRecord, NOISY_SPREAD};
use crate::{BenchError, Result};

/// Relative tolerance of the pre-timing cross-check.
const CROSS_CHECK_TOL: f64 = 1e-4;

/// One implementation taking part in a benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Variant {
    pub label: &'static str,
    pub op: OpId,
    /// Whether the variant runs on padded inputs.
    pub padded: bool,
}

const DENSE: Variant = Variant { label: "dense", op: OpId::DenseAttention, padded: true };
const DENSE_FLASH: Variant = Variant { label: "dense_flash", op: OpId::DenseFlashAttention, padded: true };
const JAGGED: Variant = Variant { label: "jagged", op: OpId::JaggedAttention, padded: false };
const JAGGED_FLASH: Variant = Variant { label: "jagged_flash", op: OpId::JaggedFlashAttention, padded: false };

/// Variants timed for `op`; the first is the baseline the ratios refer to.
pub fn variants_for(op: OpId) -> Vec<Variant> {
    match op {
        OpId::DenseAttention => vec![DENSE],
        OpId::DenseFlashAttention => vec![DENSE, DENSE_FLASH],
        OpId::JaggedAttention => vec![DENSE, JAGGED],
        OpId::JaggedFlashAttention => vec![DENSE, JAGGED_FLASH],
        op => vec![
            Variant { label: "padded", op, padded: true },
            Variant { label: "jagged", op, padded: false },
        ],
    }
}

fn attention_family() -> Vec<Variant> {
    vec![DENSE, DENSE_FLASH, JAGGED, JAGGED_FLASH]
}

/// A variant bound to generated inputs: `run` returns the full output buffer,
/// `valid` maps it to the jagged valid region for the cross-check.
struct Bound<'a, T> {
    variant: Variant,
    run: Box<dyn Fn() -> Result<Vec<T>> + 'a>,
    valid: Box<dyn Fn(Vec<T>) -> Result<Vec<T>> + 'a>,
}

struct Inputs<T> {
    lengths: Vec<usize>,
    max_len: usize,
    a: JaggedTensor<T>,
    b: JaggedTensor<T>,
    c: JaggedTensor<T>,
    weights: DenseTensor<T>,
    scores: Jagged2Tensor<T>,
    layers: Vec<linalg::MlpLayer<T>>,
}

impl<T: Scalar> Inputs<T> {
    fn generate(cfg: &BenchConfig, op: OpId) -> Self {
        let lengths = gen_lengths(&cfg.distribution(), cfg.batch);
        let mut rng = seeded_rng(cfg.seed ^ 0x5EED);
        let (d, t) = (cfg.dim, cfg.t);
        let second_width = if op == OpId::JaggedJaggedBmm { t } else { d };
        let a = random_jagged(&mut rng, &lengths, d);
        let b = random_jagged(&mut rng, &lengths, second_width);
        let c = random_jagged(&mut rng, &lengths, d);
        let weights = if op == OpId::JaggedDenseBmm {
            random_dense(&mut rng, vec![cfg.batch, d, t])
        } else {
            DenseTensor::zeros(vec![0, 0]).expect("empty")
        };
        let sq = lengths.iter().map(|l| l * l).sum();
        let scores = if matches!(op, OpId::ArrayJaggedBmmJaggedOut | OpId::Jagged2Softmax) {
            Jagged2Tensor::new(lengths.clone(), random_values(&mut rng, sq, -1.0, 1.0)).expect("sized")
        } else {
            Jagged2Tensor::zeros(vec![0; cfg.batch])
        };
        let layers = if op == OpId::JaggedMlp { random_mlp(&mut rng, d, t) } else { Vec::new() };
        Self { lengths, max_len: cfg.max_len, a, b, c, weights, scores, layers }
    }

    fn pad(&self, x: &JaggedTensor<T>) -> DenseTensor<T> {
        jagged_to_dense(x, self.max_len, T::zero())
    }

    /// Padded tensor viewed as a jagged tensor whose every sample has `max_len` rows.
    fn pad_full(&self, x: &JaggedTensor<T>) -> JaggedTensor<T> {
        let full = vec![self.max_len; self.lengths.len()];
        JaggedTensor::from_lengths(&full, self.pad(x).into_data(), x.dim()).expect("padded size")
    }

    fn unpad_rows(&self, data: Vec<T>, width: usize) -> Result<Vec<T>> {
        let d = DenseTensor::new(vec![self.lengths.len(), self.max_len, width], data)?;
        Ok(dense_to_jagged(&d, &self.lengths)?.into_values())
    }

    fn unpad_blocks(&self, data: Vec<T>) -> Result<Vec<T>> {
        let d = DenseTensor::new(vec![self.lengths.len(), self.max_len, self.max_len], data)?;
        Ok(dense_to_jagged2(&d, &self.lengths)?.into_values())
    }
}

fn bind<'a, T: Scalar>(v: Variant, x: &'a Inputs<T>, cfg: &BenchConfig) -> Bound<'a, T> {
    let (d, t) = (x.a.dim(), cfg.t);
    let (bq, bk) = (cfg.blocks.q, cfg.blocks.k);
    let rows = move |w: usize| -> Box<dyn Fn(Vec<T>) -> Result<Vec<T>> + 'a> { Box::new(move |o| x.unpad_rows(o, w)) };
    let same: Box<dyn Fn(Vec<T>) -> Result<Vec<T>> + 'a> = Box::new(Ok);
    let (run, valid): (Box<dyn Fn() -> Result<Vec<T>> + 'a>, _) = match (v.op, v.padded) {
        (OpId::JaggedDenseBmm, false) => (Box::new(|| Ok(linalg::jagged_dense_bmm(&x.a, &x.weights)?.into_values())), same),
        (OpId::JaggedDenseBmm, true) => {
            let xp = x.pad_full(&x.a);
            (Box::new(move || Ok(linalg::jagged_dense_bmm(&xp, &x.weights)?.into_values())), rows(t))
        }
        (OpId::JaggedJaggedBmm, false) => (Box::new(|| Ok(linalg::jagged_jagged_bmm(&x.a, &x.b)?.into_data())), same),
        (OpId::JaggedJaggedBmm, true) => {
            let (xp, yp) = (x.pad_full(&x.a), x.pad_full(&x.b));
            (Box::new(move || Ok(linalg::jagged_jagged_bmm(&xp, &yp)?.into_data())), same)
        }
        (OpId::JaggedSoftmax, false) => (Box::new(|| Ok(linalg::jagged_softmax(&x.a).into_values())), same),
        (OpId::JaggedSoftmax, true) => {
            let xp = x.pad(&x.a);
            (Box::new(move || Ok(padded::dense_masked_softmax(&xp, &x.lengths)?.into_data())), rows(d))
        }
        (OpId::JaggedJaggedBmmJaggedOut, false) => (
            Box::new(|| Ok(linalg::jagged_jagged_bmm_jagged_out(&x.a, &x.b)?.into_values())),
            same,
        ),
        (OpId::JaggedJaggedBmmJaggedOut, true) => {
            let (qp, kp) = (x.pad_full(&x.a), x.pad_full(&x.b));
            (
                Box::new(move || Ok(linalg::jagged_jagged_bmm_jagged_out(&qp, &kp)?.into_values())),
                Box::new(move |o| x.unpad_blocks(o)),
            )
        }
        (OpId::ArrayJaggedBmmJaggedOut, false) => (
            Box::new(|| Ok(linalg::array_jagged_bmm_jagged_out(&x.scores, &x.a)?.into_values())),
            same,
        ),
        (OpId::ArrayJaggedBmmJaggedOut, true) => {
            let full = vec![x.max_len; x.lengths.len()];
            let sp = Jagged2Tensor::new(full, jagged2_to_dense(&x.scores, x.max_len, T::zero()).into_data())
                .expect("padded size");
            let vp = x.pad_full(&x.a);
            (
                Box::new(move || Ok(linalg::array_jagged_bmm_jagged_out(&sp, &vp)?.into_values())),
                rows(d),
            )
        }
        (OpId::Jagged2Softmax, false) => (Box::new(|| Ok(linalg::jagged2_softmax(&x.scores).into_values())), same),
        (OpId::Jagged2Softmax, true) => {
            let sp = jagged2_to_dense(&x.scores, x.max_len, T::zero());
            (
                Box::new(move || Ok(padded::dense_masked_row_softmax(&sp, &x.lengths)?.into_data())),
                Box::new(move |o| x.unpad_blocks(o)),
            )
        }
        (OpId::JaggedMlp, false) => (Box::new(|| Ok(linalg::jagged_mlp(&x.a, &x.layers)?.into_values())), same),
        (OpId::JaggedMlp, true) => {
            let xp = x.pad_full(&x.a);
            (Box::new(move || Ok(linalg::jagged_mlp(&xp, &x.layers)?.into_values())), rows(t))
        }
        (OpId::DenseAttention, _) => {
            let (qp, kp, vp) = (x.pad(&x.a), x.pad(&x.b), x.pad(&x.c));
            (
                Box::new(move || Ok(dense_attention(&qp, &kp, &vp, &x.lengths)?.into_data())),
                rows(d),
            )
        }
        (OpId::DenseFlashAttention, _) => {
            let (qp, kp, vp) = (x.pad(&x.a), x.pad(&x.b), x.pad(&x.c));
            (
                Box::new(move || Ok(dense_flash_attention(&qp, &kp, &vp, &x.lengths, bq, bk)?.0.into_data())),
                rows(d),
            )
        }
        (OpId::JaggedAttention, _) => (Box::new(|| Ok(jagged_attention(&x.a, &x.b, &x.c)?.into_values())), same),
        (OpId::JaggedFlashAttention, _) => (
            Box::new(move || Ok(jagged_flash_attention_forward(&x.a, &x.b, &x.c, bq, bk)?.0.into_values())),
            same,
        ),
    };
    Bound { variant: v, run, valid }
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

struct Measured {
    p10: f64,
    p50: f64,
    p90: f64,
    checksum: f64,
    flops: u64,
    bytes: u64,
}

fn bench_variants<T: Scalar>(cfg: &BenchConfig, variants: &[Variant]) -> Result<Vec<BenchRecord>> {
    let inputs = Inputs::<T>::generate(cfg, variants[variants.len() - 1].op);
    let bound: Vec<Bound<'_, T>> = variants.iter().map(|&v| bind(v, &inputs, cfg)).collect();

    // correctness first; nothing is timed if any variant disagrees with the baseline
    let mut outputs = Vec::with_capacity(bound.len());
    for b in &bound {
        let full = (b.run)()?;
        let checksum = full.iter().map(|x| x.to_acc()).sum::<f64>();
        outputs.push(((b.valid)(full)?, checksum));
    }
    for (b, (out, _)) in bound.iter().zip(&outputs).skip(1) {
        let error = max_rel_diff(out, &outputs[0].0);
        // NaN counts as a failure
        if error.is_nan() || error >= CROSS_CHECK_TOL {
            return Err(BenchError::CrossCheck {
                op: cfg.op.to_string(),
                variant: b.variant.label.into(),
                baseline: bound[0].variant.label.into(),
                error,
            });
        }
    }

    let mut measured = Vec::with_capacity(bound.len());
    for (b, (_, checksum)) in bound.iter().zip(&outputs) {
        for _ in 0..cfg.warmup {
            black_box((b.run)()?);
        }
        let mut times = Vec::with_capacity(cfg.iters);
        for _ in 0..cfg.iters {
            let start = Instant::now();
            black_box((b.run)()?);
            times.push((start.elapsed().as_nanos() as f64 / 1e3).max(1e-3));
        }
        times.sort_by(f64::total_cmp);
        let cost = cost_report(
            &OpConfig::new(b.variant.op, cfg.dim, cfg.t, inputs.lengths.clone())
                .with_padded_len(cfg.max_len)
                .with_element_bytes(cfg.precision.element_bytes())
                .with_blocks(cfg.blocks.q, cfg.blocks.k),
        )?;
        let (flops, bytes) = if b.variant.padded {
            (cost.flops_padded, cost.bytes_padded)
        } else {
            (cost.flops_jagged, cost.bytes_jagged)
        };
        measured.push(Measured {
            p10: percentile(&times, 10.0),
            p50: percentile(&times, 50.0),
            p90: percentile(&times, 90.0),
            checksum: *checksum,
            flops,
            bytes,
        });
    }

    let base = &measured[0];
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 1.0 };
    Ok(bound
        .iter()
        .zip(&measured)
        .map(|(b, m)| BenchRecord {
            op: b.variant.op,
            variant: b.variant.label.into(),
            batch: cfg.batch,
            dim: cfg.dim,
            t: cfg.t,
            max_len: cfg.max_len,
            dist: cfg.dist,
            seed: cfg.seed,
            precision: cfg.precision,
            threads: cfg.threads,
            iters: cfg.iters,
            warmup: cfg.warmup,
            block_q: cfg.blocks.q,
            block_k: cfg.blocks.k,
            time_us_p50: m.p50,
            time_us_p10: m.p10,
            time_us_p90: m.p90,
            flops: m.flops,
            bytes: m.bytes,
            speedup_vs_dense: ratio(base.p50, m.p50),
            bytes_ratio_vs_dense: ratio(base.bytes as f64, m.bytes as f64),
            flops_ratio_vs_dense: ratio(base.flops as f64, m.flops as f64),
            checksum: m.checksum,
            noisy: m.p90 / m.p10 > NOISY_SPREAD,
        })
        .collect())
}

fn in_pool<R: Send>(threads: usize, f: impl FnOnce() -> Result<R> + Send) -> Result<R> {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build()?.install(f)
}

fn dispatch(cfg: &BenchConfig, variants: &[Variant]) -> Result<Vec<BenchRecord>> {
    cfg.validate()?;
    in_pool(cfg.threads, || match cfg.precision {
        Precision::F32 => bench_variants::<f32>(cfg, variants),
        Precision::F64 => bench_variants::<f64>(cfg, variants),
    })
}

/// Times `cfg.op` and its baseline at `cfg.max_len`; one record per variant, baseline first.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchRecord>> {
    dispatch(cfg, &variants_for(cfg.op))
}

/// Runs all four attention variants at every point of `cfg.grid`, lengths redrawn per point.
pub fn run_sweep(cfg: &BenchConfig) -> Result<Vec<BenchRecord>> {
    if cfg.grid.is_empty() {
        return Err(BenchError::Config("empty max_len grid".into()));
    }
    let mut records = Vec::new();
    for &max_len in &cfg.grid {
        records.extend(dispatch(&cfg.at_max_len(max_len), &attention_family())?);
    }
    Ok(records)
}

/// Same as [`run_sweep`] but for any single operator and its baseline.
pub fn run_op_sweep(cfg: &BenchConfig) -> Result<Vec<BenchRecord>> {
    let mut records = Vec::new();
    for &max_len in &cfg.grid {
        records.extend(run_bench(&cfg.at_max_len(max_len))?);
    }
    Ok(records)
}
