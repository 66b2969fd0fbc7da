use rayon::prelude::*;

use super::gemm::{gemm, gemm_with, MatView};
use super::DEFAULT_BLOCK;
use crate::error::{JaggedError, Result};
use crate::scalar::Scalar;
use crate::tensor::{DenseTensor, JaggedTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    None,
}

impl Activation {
    #[inline(always)]
    fn apply(self, z: f64) -> f64 {
        match self {
            Self::Relu => z.max(0.0),
            Self::None => z,
        }
    }
}

/// One affine layer `h -> act(h W + b)` with `W` shaped `[d_in, d_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpLayer<T> {
    weight: DenseTensor<T>,
    bias: Vec<T>,
    activation: Activation,
}

impl<T: Scalar> MlpLayer<T> {
    pub fn new(weight: DenseTensor<T>, bias: Vec<T>, activation: Activation) -> Result<Self> {
        let [_, d_out] = weight.dims2()?;
        if bias.len() != d_out {
            return Err(JaggedError::ShapeMismatch(format!(
                "bias has {} entries for a layer of width {d_out}",
                bias.len()
            )));
        }
        Ok(Self {
            weight,
            bias,
            activation,
        })
    }

    pub fn weight(&self) -> &DenseTensor<T> {
        &self.weight
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn d_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn d_out(&self) -> usize {
        self.weight.shape()[1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads<T> {
    pub dx: JaggedTensor<T>,
    /// `(dW, db)` per layer, in layer order.
    pub layers: Vec<(DenseTensor<T>, Vec<T>)>,
}

fn check_chain<T: Scalar>(d_in: usize, layers: &[MlpLayer<T>]) -> Result<()> {
    if layers.is_empty() {
        return Err(JaggedError::ShapeMismatch("MLP needs at least one layer".into()));
    }
    let mut width = d_in;
    for (l, layer) in layers.iter().enumerate() {
        if layer.d_in() != width {
            return Err(JaggedError::ShapeMismatch(format!(
                "layer {l} expects width {}, got {width}",
                layer.d_in()
            )));
        }
        if layer.d_out() == 0 {
            return Err(JaggedError::ShapeMismatch(format!("layer {l} has zero width")));
        }
        width = layer.d_out();
    }
    Ok(())
}

fn layer_forward<T: Scalar>(h: &[T], rows: usize, layer: &MlpLayer<T>, block: usize) -> Vec<T> {
    let (d_in, d_out) = (layer.d_in(), layer.d_out());
    let mut out = vec![T::zero(); rows * d_out];
    let chunk = block.max(1);
    out.par_chunks_mut(chunk * d_out)
        .zip(h.par_chunks(chunk * d_in))
        .for_each(|(o, hin)| {
            let r = hin.len() / d_in;
            gemm_with(
                MatView::row_major(hin, r, d_in),
                MatView::row_major(layer.weight.data(), d_in, d_out),
                o,
                block,
                |_, j, acc| layer.activation.apply(acc + layer.bias[j].to_acc()),
            );
        });
    out
}

/// Applies the same stack of layers to every row; offsets are preserved.
pub fn jagged_mlp<T: Scalar>(x: &JaggedTensor<T>, layers: &[MlpLayer<T>]) -> Result<JaggedTensor<T>> {
    jagged_mlp_blocked(x, layers, DEFAULT_BLOCK)
}

pub fn jagged_mlp_blocked<T: Scalar>(
    x: &JaggedTensor<T>,
    layers: &[MlpLayer<T>],
    block: usize,
) -> Result<JaggedTensor<T>> {
    check_chain(x.dim(), layers)?;
    let rows = x.total_rows();
    let mut h = x.values().to_vec();
    for layer in layers {
        h = layer_forward(&h, rows, layer, block);
    }
    let width = layers[layers.len() - 1].d_out();
    Ok(JaggedTensor::from_parts(width, x.offsets().to_vec(), h))
}

/// Layer-wise backprop; the relu gate is `pre-activation > 0`.
pub fn jagged_mlp_vjp<T: Scalar>(
    x: &JaggedTensor<T>,
    layers: &[MlpLayer<T>],
    grad_out: &JaggedTensor<T>,
) -> Result<MlpGrads<T>> {
    check_chain(x.dim(), layers)?;
    x.check_same_offsets(grad_out)?;
    let width = layers[layers.len() - 1].d_out();
    if grad_out.dim() != width {
        return Err(JaggedError::ShapeMismatch(format!(
            "grad width {} vs MLP output width {width}",
            grad_out.dim()
        )));
    }
    let rows = x.total_rows();
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(x.values().to_vec());
    for layer in layers {
        let next = layer_forward(&acts[acts.len() - 1], rows, layer, DEFAULT_BLOCK);
        acts.push(next);
    }

    let mut grads = Vec::with_capacity(layers.len());
    let mut dh = grad_out.values().to_vec();
    for (l, layer) in layers.iter().enumerate().rev() {
        let (d_in, d_out) = (layer.d_in(), layer.d_out());
        let out = &acts[l + 1];
        let dz: Vec<T> = match layer.activation {
            Activation::None => dh,
            Activation::Relu => dh
                .iter()
                .zip(out)
                .map(|(&g, &h)| if h > T::zero() { g } else { T::zero() })
                .collect(),
        };
        let dzv = MatView::row_major(&dz, rows, d_out);
        let mut dw = vec![T::zero(); d_in * d_out];
        gemm(MatView::row_major(&acts[l], rows, d_in).t(), dzv, 1.0, &mut dw, DEFAULT_BLOCK);
        let mut db = vec![0.0f64; d_out];
        for row in dz.chunks(d_out) {
            for (acc, &g) in db.iter_mut().zip(row) {
                *acc += g.to_acc();
            }
        }
        let mut dprev = vec![T::zero(); rows * d_in];
        gemm(
            dzv,
            MatView::row_major(layer.weight.data(), d_in, d_out).t(),
            1.0,
            &mut dprev,
            DEFAULT_BLOCK,
        );
        grads.push((
            DenseTensor::from_parts(vec![d_in, d_out], dw),
            db.into_iter().map(T::from_acc).collect(),
        ));
        dh = dprev;
    }
    grads.reverse();
    Ok(MlpGrads {
        dx: JaggedTensor::from_parts(x.dim(), x.offsets().to_vec(), dh),
        layers: grads,
    })
}
