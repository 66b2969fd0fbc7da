//! Central-difference gradient checking for the registered backward passes.

use serde::{Deserialize, Serialize};

use crate::error::{JaggedError, Result};
use crate::lengths::{random_index, random_values, seeded_rng, FixtureRng};
use crate::linalg::Activation;
use crate::ops::{self, AnyTensor, Blocks, OpId};
use crate::tensor::{DenseTensor, Jagged2Tensor, JaggedTensor};

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-5;
/// A check also passes when every coordinate is within this absolute error.
pub const ABSOLUTE_FLOOR: f64 = 1e-7;
/// Minimum gap between scores in one softmax slice, and between relu pre-activations and 0.
pub const KINK_MARGIN: f64 = 1e-4;

/// Location of a gradient entry: input slot and flat index into its buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coordinate {
    pub slot: usize,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub op_id: String,
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    pub worst_coordinate: Option<Coordinate>,
    pub tolerance: f64,
    pub pass: bool,
}

/// Input shapes for a randomized check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub lengths: Vec<usize>,
    pub dim: usize,
    pub t: usize,
}

impl ShapeSpec {
    pub fn new(lengths: Vec<usize>, dim: usize, t: usize) -> Self {
        Self { lengths, dim, t }
    }

    /// Batch of `1..=max_batch` samples with lengths drawn from `choices`.
    pub fn random(rng: &mut FixtureRng, max_batch: usize, choices: &[usize], max_dim: usize) -> Self {
        let b = random_index(rng, 1, max_batch);
        let lengths = (0..b).map(|_| choices[random_index(rng, 0, choices.len() - 1)]).collect();
        let dim = random_index(rng, 1, max_dim);
        let t = random_index(rng, 1, max_dim);
        Self { lengths, dim, t }
    }
}

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` with `h = eps * max(1, |x_i|)`.
pub fn numerical_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], eps: f64) -> Result<Vec<f64>> {
    numerical_grad_slot(f, x, eps, 0)
}

fn numerical_grad_slot(f: impl Fn(&[f64]) -> f64, x: &[f64], eps: f64, slot: usize) -> Result<Vec<f64>> {
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let h = eps * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let plus = f(&probe);
        probe[i] = x[i] - h;
        let minus = f(&probe);
        probe[i] = x[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(JaggedError::NonFinite { slot, index: i });
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// Compares analytic and numeric gradients slot by slot.
///
/// Relative error per coordinate is `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn compare(op_id: &str, analytic: &[Vec<f64>], numeric: &[Vec<f64>], tolerance: f64) -> GradCheckReport {
    let mut max_rel = 0.0f64;
    let mut max_abs = 0.0f64;
    let mut worst = None;
    for (slot, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        for (index, (&av, &nv)) in a.iter().zip(n).enumerate() {
            let abs = (av - nv).abs();
            let rel = abs / av.abs().max(nv.abs()).max(1e-8);
            let rel = if rel.is_nan() { f64::INFINITY } else { rel };
            max_abs = max_abs.max(if abs.is_nan() { f64::INFINITY } else { abs });
            if worst.is_none() || rel > max_rel {
                max_rel = rel;
                worst = Some(Coordinate { slot, index });
            }
        }
    }
    let pass = max_rel < tolerance || max_abs < ABSOLUTE_FLOOR;
    GradCheckReport {
        op_id: op_id.to_string(),
        max_relative_error: max_rel,
        max_absolute_error: max_abs,
        worst_coordinate: worst,
        tolerance,
        pass,
    }
}

fn inner(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Checks `vjp` against finite differences of `x -> <u, forward(x)>` for every input slot.
pub fn check_with<F, G>(
    op_id: &str,
    inputs: &[AnyTensor<f64>],
    cotangent: &AnyTensor<f64>,
    forward: F,
    vjp: G,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&[AnyTensor<f64>]) -> Result<AnyTensor<f64>>,
    G: Fn(&[AnyTensor<f64>], &AnyTensor<f64>) -> Result<Vec<AnyTensor<f64>>>,
{
    let out = forward(inputs)?;
    if !out.same_layout(cotangent) {
        return Err(JaggedError::ShapeMismatch("cotangent layout differs from output".into()));
    }
    let grads = vjp(inputs, cotangent)?;
    if grads.len() != inputs.len() || grads.iter().zip(inputs).any(|(g, x)| !g.same_layout(x)) {
        return Err(JaggedError::ShapeMismatch(format!(
            "{op_id}: gradients do not match the input layouts"
        )));
    }
    let analytic: Vec<Vec<f64>> = grads.iter().map(|g| g.values().to_vec()).collect();
    let mut numeric = Vec::with_capacity(inputs.len());
    for slot in 0..inputs.len() {
        let f = |x: &[f64]| {
            let mut probe = inputs.to_vec();
            probe[slot] = inputs[slot].with_values(x.to_vec()).expect("same length");
            match forward(&probe) {
                Ok(y) => inner(y.values(), cotangent.values()),
                Err(_) => f64::NAN,
            }
        };
        numeric.push(numerical_grad_slot(f, inputs[slot].values(), DEFAULT_EPS, slot)?);
    }
    Ok(compare(op_id, &analytic, &numeric, tolerance))
}

fn softmax_slices_separated(values: &[f64], slices: impl Iterator<Item = Vec<usize>>) -> bool {
    for idx in slices {
        let mut v: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
        v.sort_by(|a, b| a.total_cmp(b));
        if v.windows(2).any(|w| w[1] - w[0] < KINK_MARGIN) {
            return false;
        }
    }
    true
}

fn jagged_columns(x: &JaggedTensor<f64>) -> impl Iterator<Item = Vec<usize>> + '_ {
    let d = x.dim();
    (0..x.batch()).flat_map(move |i| {
        let (start, n) = (x.offsets()[i], x.segment_len(i));
        (0..d).map(move |c| (0..n).map(|r| (start + r) * d + c).collect())
    })
}

fn jagged2_rows(s: &Jagged2Tensor<f64>) -> impl Iterator<Item = Vec<usize>> + '_ {
    (0..s.batch()).flat_map(move |i| {
        let (start, n) = (s.sq_offsets()[i], s.seq_lengths()[i]);
        (0..n).map(move |r| (0..n).map(|c| start + r * n + c).collect())
    })
}

fn draw_jagged(rng: &mut FixtureRng, lengths: &[usize], dim: usize) -> JaggedTensor<f64> {
    let n = lengths.iter().sum::<usize>() * dim;
    JaggedTensor::from_lengths(lengths, random_values(rng, n, -1.0, 1.0), dim).expect("sized")
}

fn draw_jagged2(rng: &mut FixtureRng, lengths: &[usize]) -> Jagged2Tensor<f64> {
    let n = lengths.iter().map(|l| l * l).sum();
    Jagged2Tensor::new(lengths.to_vec(), random_values(rng, n, -1.0, 1.0)).expect("sized")
}

fn draw_dense(rng: &mut FixtureRng, shape: Vec<usize>) -> DenseTensor<f64> {
    let n = shape.iter().product();
    DenseTensor::new(shape, random_values(rng, n, -1.0, 1.0)).expect("sized")
}

const MAX_DRAWS: usize = 1000;

/// Random inputs for `op`, redrawn until softmax slices have no near-ties and
/// relu pre-activations stay clear of 0.
pub fn random_inputs(op: OpId, spec: &ShapeSpec, rng: &mut FixtureRng) -> Result<Vec<AnyTensor<f64>>> {
    let (lengths, d, t) = (&spec.lengths, spec.dim, spec.t);
    let b = lengths.len();
    for _ in 0..MAX_DRAWS {
        let inputs: Vec<AnyTensor<f64>> = match op {
            OpId::JaggedDenseBmm => vec![
                draw_jagged(rng, lengths, d).into(),
                draw_dense(rng, vec![b, d, t]).into(),
            ],
            OpId::JaggedJaggedBmm => vec![
                draw_jagged(rng, lengths, d).into(),
                draw_jagged(rng, lengths, t).into(),
            ],
            OpId::JaggedSoftmax => {
                let x = draw_jagged(rng, lengths, d);
                if !softmax_slices_separated(x.values(), jagged_columns(&x)) {
                    continue;
                }
                vec![x.into()]
            }
            OpId::JaggedJaggedBmmJaggedOut => vec![
                draw_jagged(rng, lengths, d).into(),
                draw_jagged(rng, lengths, d).into(),
            ],
            OpId::ArrayJaggedBmmJaggedOut => vec![
                draw_jagged2(rng, lengths).into(),
                draw_jagged(rng, lengths, d).into(),
            ],
            OpId::Jagged2Softmax => {
                let s = draw_jagged2(rng, lengths);
                if !softmax_slices_separated(s.values(), jagged2_rows(&s)) {
                    continue;
                }
                vec![s.into()]
            }
            OpId::JaggedMlp => {
                let mut inputs: Vec<AnyTensor<f64>> = vec![draw_jagged(rng, lengths, d).into()];
                for (din, dout) in crate::costmodel::mlp_widths(d, t) {
                    inputs.push(draw_dense(rng, vec![din, dout]).into());
                    inputs.push(draw_dense(rng, vec![1, dout]).into());
                }
                if !relu_clear_of_kink(&inputs)? {
                    continue;
                }
                inputs
            }
            OpId::JaggedAttention | OpId::JaggedFlashAttention => vec![
                draw_jagged(rng, lengths, d).into(),
                draw_jagged(rng, lengths, d).into(),
                draw_jagged(rng, lengths, d).into(),
            ],
            OpId::DenseAttention | OpId::DenseFlashAttention => {
                return Err(JaggedError::NoBackward(op.to_string()))
            }
        };
        return Ok(inputs);
    }
    Err(JaggedError::ShapeMismatch(format!(
        "could not draw kink-free inputs for {op} in {MAX_DRAWS} attempts"
    )))
}

fn relu_clear_of_kink(inputs: &[AnyTensor<f64>]) -> Result<bool> {
    let layers = ops::mlp_layers_from_inputs(inputs)?;
    let x = inputs[0].as_jagged()?;
    let mut h = x.values().to_vec();
    let rows = x.total_rows();
    for layer in &layers {
        let (din, dout) = (layer.d_in(), layer.d_out());
        let w = layer.weight().data();
        let mut next = vec![0.0; rows * dout];
        for r in 0..rows {
            for j in 0..dout {
                let z: f64 = (0..din).map(|k| h[r * din + k] * w[k * dout + j]).sum::<f64>() + layer.bias()[j];
                if layer.activation() == Activation::Relu && z.abs() < KINK_MARGIN {
                    return Ok(false);
                }
                next[r * dout + j] = if layer.activation() == Activation::Relu { z.max(0.0) } else { z };
            }
        }
        h = next;
    }
    Ok(true)
}

/// Finite-difference reference forward for `op`. Flash attention is checked
/// against differences of the unfused composition.
fn reference_op(op: OpId) -> OpId {
    match op {
        OpId::JaggedFlashAttention => OpId::JaggedAttention,
        other => other,
    }
}

/// Draws inputs and a cotangent from `seed` and checks the registered backward of `op`.
pub fn check_op(op: OpId, spec: &ShapeSpec, seed: u64, tol: f64) -> Result<GradCheckReport> {
    check_op_blocked(op, spec, seed, tol, Blocks::default())
}

pub fn check_op_blocked(op: OpId, spec: &ShapeSpec, seed: u64, tol: f64, blocks: Blocks) -> Result<GradCheckReport> {
    if !op.has_backward() {
        return Err(JaggedError::NoBackward(op.to_string()));
    }
    let mut rng = seeded_rng(seed);
    let inputs = random_inputs(op, spec, &mut rng)?;
    let out = ops::forward(op, &inputs, blocks)?;
    let cotangent = out.with_values(random_values(&mut rng, out.values().len(), -1.0, 1.0))?;
    let reference = reference_op(op);
    check_with(
        op.as_str(),
        &inputs,
        &cotangent,
        |x| ops::forward(reference, x, blocks),
        |x, u| ops::vjp(op, x, u, blocks),
        tol,
    )
}

/// Segment lengths exercised by the randomized suites.
pub const LINALG_LENGTHS: [usize; 5] = [0, 1, 2, 5, 7];
pub const FLASH_LENGTHS: [usize; 3] = [1, 2, 17];

/// `cases` seeded random shapes for `op`, each checked at `tol`.
pub fn check_suite(op: OpId, seed: u64, cases: usize, tol: f64) -> Result<Vec<GradCheckReport>> {
    let mut rng = seeded_rng(seed);
    let (choices, max_batch, max_dim): (&[usize], usize, usize) = if op.is_attention() {
        (&FLASH_LENGTHS, 3, 4)
    } else {
        (&LINALG_LENGTHS, 4, 4)
    };
    (0..cases)
        .map(|case| {
            let spec = ShapeSpec::random(&mut rng, max_batch, choices, max_dim);
            let blocks = Blocks {
                q: random_index(&mut rng, 1, 8),
                k: random_index(&mut rng, 1, 8),
            };
            let case_seed = seed.wrapping_mul(1_000_003).wrapping_add(case as u64);
            check_op_blocked(op, &spec, case_seed, tol, blocks)
        })
        .collect()
}
