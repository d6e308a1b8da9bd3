//! Fully connected layers evaluated on column batches, and the parameter
//! container interface the optimizer works on.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Flat views of every parameter tensor, in a fixed order. Gradients use the
/// same container type as the parameters they belong to.
pub trait ParamSet: Sized {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn zeros_like(&self) -> Self;

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// `z = W x + b` with `W` of shape `outputs × inputs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LayerDoc", into = "LayerDoc")]
pub struct DenseLayer {
    pub(crate) weights: DMatrix<f64>,
    pub(crate) bias: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct LayerDoc {
    inputs: usize,
    outputs: usize,
    /// Row-major.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl TryFrom<LayerDoc> for DenseLayer {
    type Error = Error;

    fn try_from(doc: LayerDoc) -> Result<Self> {
        check_dim("layer weights", doc.inputs * doc.outputs, doc.weights.len())?;
        check_dim("layer bias", doc.outputs, doc.bias.len())?;
        DenseLayer::new(
            DMatrix::from_row_slice(doc.outputs, doc.inputs, &doc.weights),
            DVector::from_vec(doc.bias),
        )
    }
}

impl From<DenseLayer> for LayerDoc {
    fn from(l: DenseLayer) -> Self {
        LayerDoc {
            inputs: l.inputs(),
            outputs: l.outputs(),
            weights: l.weights.transpose().as_slice().to_vec(),
            bias: l.bias.as_slice().to_vec(),
        }
    }
}

impl DenseLayer {
    pub fn new(weights: DMatrix<f64>, bias: DVector<f64>) -> Result<Self> {
        check_dim("layer bias", weights.nrows(), bias.len())?;
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("layer parameters must be finite"));
        }
        Ok(DenseLayer { weights, bias })
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        DenseLayer {
            weights: DMatrix::zeros(outputs, inputs),
            bias: DVector::zeros(outputs),
        }
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = glorot_limit(inputs, outputs);
        DenseLayer {
            weights: DMatrix::from_fn(outputs, inputs, |_, _| rng.random_range(-limit..=limit)),
            bias: DVector::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn bias(&self) -> &DVector<f64> {
        &self.bias
    }

    /// Pre-activations for a batch stored column-wise.
    pub(crate) fn affine(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &self.weights * x;
        for mut col in z.column_iter_mut() {
            col += &self.bias;
        }
        z
    }

    /// Accumulates `dW = δ xᵀ`, `db = Σ δ` and, when `propagate` is set,
    /// returns `Wᵀ δ`.
    pub(crate) fn backward(
        &self,
        x: &DMatrix<f64>,
        delta: &DMatrix<f64>,
        grad: &mut DenseLayer,
        propagate: bool,
    ) -> Option<DMatrix<f64>> {
        grad.weights += delta * x.transpose();
        grad.bias += delta.column_sum();
        propagate.then(|| self.weights.tr_mul(delta))
    }
}

impl ParamSet for DenseLayer {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![self.weights.as_slice(), self.bias.as_slice()]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weights.as_mut_slice(), self.bias.as_mut_slice()]
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.inputs(), self.outputs())
    }
}

pub(crate) fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out).max(1) as f64).sqrt()
}

/// Inverted dropout: kept units are scaled by `1/(1 − rate)` so that no
/// rescaling is needed at evaluation time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dropout {
    pub rate: f64,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!(
                "dropout rate must lie in [0, 1), got {rate}"
            )));
        }
        Ok(Dropout { rate })
    }

    pub(crate) fn mask<R: Rng + ?Sized>(
        &self,
        rows: usize,
        cols: usize,
        rng: &mut R,
    ) -> DMatrix<f64> {
        let keep = 1.0 / (1.0 - self.rate);
        DMatrix::from_fn(rows, cols, |_, _| {
            if rng.random::<f64>() < self.rate {
                0.0
            } else {
                keep
            }
        })
    }
}

/// A hidden stack of tanh layers with cached activations for backprop.
pub(crate) struct TrunkPass {
    /// `inputs[l]` is the input of layer `l`; the last entry is the trunk output.
    pub activations: Vec<DMatrix<f64>>,
    pub masks: Vec<Option<DMatrix<f64>>>,
}

pub(crate) fn trunk_forward<R: Rng + ?Sized>(
    layers: &[DenseLayer],
    x: &DMatrix<f64>,
    dropout: Option<(&Dropout, &mut R)>,
) -> TrunkPass {
    let mut activations = Vec::with_capacity(layers.len() + 1);
    let mut masks = Vec::with_capacity(layers.len());
    activations.push(x.clone());
    let mut dropout = dropout;
    for layer in layers {
        let mut h = layer.affine(activations.last().expect("input present"));
        h.apply(|v| *v = v.tanh());
        let mask = match dropout.as_mut() {
            Some((d, rng)) if d.rate > 0.0 => {
                let m = d.mask(h.nrows(), h.ncols(), *rng);
                h.component_mul_assign(&m);
                Some(m)
            }
            _ => None,
        };
        masks.push(mask);
        activations.push(h);
    }
    TrunkPass { activations, masks }
}

/// Deterministic evaluation pass.
pub(crate) fn trunk_eval(layers: &[DenseLayer], x: &DMatrix<f64>) -> TrunkPass {
    trunk_forward::<rand_chacha::ChaCha8Rng>(layers, x, None)
}

/// Propagates `δ` at the trunk output back to the input, filling the layer
/// gradients.
pub(crate) fn trunk_backward(
    layers: &[DenseLayer],
    pass: &TrunkPass,
    mut delta: DMatrix<f64>,
    grads: &mut [DenseLayer],
) {
    for l in (0..layers.len()).rev() {
        let out = &pass.activations[l + 1];
        match &pass.masks[l] {
            Some(m) => {
                // out = tanh(z)·m, so tanh(z) = out/m where m ≠ 0.
                delta.zip_zip_apply(out, m, |d, o, mk| {
                    *d = if mk == 0.0 {
                        0.0
                    } else {
                        let a = o / mk;
                        *d * mk * (1.0 - a * a)
                    };
                });
            }
            None => delta.zip_apply(out, |d, o| *d *= 1.0 - o * o),
        }
        match layers[l].backward(&pass.activations[l], &delta, &mut grads[l], l > 0) {
            Some(below) => delta = below,
            None => break,
        }
    }
}
