//! Phase-modulated neural network for one coupling dimension.
//!
//! ```text
//! h_l = tanh(W_l h_{l−1} + b_l)
//! m   = G ⊙ (W_m h_L + b_m),   G_i = ψ_i(p)/Σψ_j(p) · u
//! C   = w_Cᵀ m                 (no output bias)
//! ```
//!
//! Because every path to the output passes through `G`, `C` is exactly zero
//! whenever `u` is.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    glorot_limit, trunk_backward, trunk_eval, trunk_forward, DenseLayer, Dropout, ParamSet,
};
use crate::canonical::{PhaseKernelBank, PhaseState};
use crate::error::{check_dim, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PmnnDoc", into = "PmnnDoc")]
pub struct PmnnParams {
    hidden: Vec<DenseLayer>,
    modulated: DenseLayer,
    output: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct PmnnDoc {
    hidden: Vec<DenseLayer>,
    modulated: DenseLayer,
    output: Vec<f64>,
}

impl TryFrom<PmnnDoc> for PmnnParams {
    type Error = Error;

    fn try_from(doc: PmnnDoc) -> Result<Self> {
        PmnnParams::new(doc.hidden, doc.modulated, DVector::from_vec(doc.output))
    }
}

impl From<PmnnParams> for PmnnDoc {
    fn from(p: PmnnParams) -> Self {
        PmnnDoc {
            hidden: p.hidden,
            modulated: p.modulated,
            output: p.output.as_slice().to_vec(),
        }
    }
}

impl PmnnParams {
    pub fn new(
        hidden: Vec<DenseLayer>,
        modulated: DenseLayer,
        output: DVector<f64>,
    ) -> Result<Self> {
        for pair in hidden.windows(2) {
            check_dim("hidden layer chain", pair[0].outputs(), pair[1].inputs())?;
        }
        if let Some(last) = hidden.last() {
            check_dim("modulated layer inputs", last.outputs(), modulated.inputs())?;
        }
        check_dim("output weights", modulated.outputs(), output.len())?;
        if output.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("output weights must be finite"));
        }
        Ok(PmnnParams {
            hidden,
            modulated,
            output,
        })
    }

    /// Glorot-uniform weights and zero biases.
    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        hidden_sizes: &[usize],
        n_kernels: usize,
        rng: &mut R,
    ) -> Self {
        let mut hidden = Vec::with_capacity(hidden_sizes.len());
        let mut width = input_dim;
        for &h in hidden_sizes {
            hidden.push(DenseLayer::glorot(width, h, rng));
            width = h;
        }
        let modulated = DenseLayer::glorot(width, n_kernels, rng);
        let limit = glorot_limit(n_kernels, 1);
        let output = DVector::from_fn(n_kernels, |_, _| rng.random_range(-limit..=limit));
        PmnnParams {
            hidden,
            modulated,
            output,
        }
    }

    pub fn zeros(input_dim: usize, hidden_sizes: &[usize], n_kernels: usize) -> Self {
        let mut hidden = Vec::with_capacity(hidden_sizes.len());
        let mut width = input_dim;
        for &h in hidden_sizes {
            hidden.push(DenseLayer::zeros(width, h));
            width = h;
        }
        PmnnParams {
            hidden,
            modulated: DenseLayer::zeros(width, n_kernels),
            output: DVector::zeros(n_kernels),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.first().unwrap_or(&self.modulated).inputs()
    }

    pub fn n_kernels(&self) -> usize {
        self.output.len()
    }

    pub fn hidden(&self) -> &[DenseLayer] {
        &self.hidden
    }

    pub fn modulated(&self) -> &DenseLayer {
        &self.modulated
    }

    pub fn output(&self) -> &DVector<f64> {
        &self.output
    }

    pub fn output_mut(&mut self) -> &mut DVector<f64> {
        &mut self.output
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.hidden.iter().map(|l| l.outputs()).collect()
    }

    /// Outputs for a batch: inputs `d × B`, modulation `N × B`.
    pub fn forward_batch(&self, x: &DMatrix<f64>, modulation: &DMatrix<f64>) -> DVector<f64> {
        let pass = trunk_eval(&self.hidden, x);
        let m = self.modulate(pass.activations.last().expect("trunk output"), modulation);
        m.tr_mul(&self.output)
    }

    fn modulate(&self, features: &DMatrix<f64>, modulation: &DMatrix<f64>) -> DMatrix<f64> {
        self.modulated.affine(features).component_mul(modulation)
    }

    /// `½·mean((C − target)²)` and its exact gradient. Dropout, when given,
    /// masks the regular hidden layers only.
    pub fn loss_and_gradient<R: Rng + ?Sized>(
        &self,
        x: &DMatrix<f64>,
        modulation: &DMatrix<f64>,
        targets: &DVector<f64>,
        dropout: Option<(&Dropout, &mut R)>,
    ) -> (f64, PmnnParams) {
        let b = targets.len().max(1) as f64;
        let pass = trunk_forward(&self.hidden, x, dropout);
        let features = pass.activations.last().expect("trunk output");
        let m = self.modulate(features, modulation);
        let c = m.tr_mul(&self.output);
        let residual = (c - targets) / b;
        let loss = 0.5 * b * residual.norm_squared();

        let mut grad = self.zeros_like();
        grad.output = &m * &residual;
        let dm = &self.output * residual.transpose();
        let dz = dm.component_mul(modulation);
        if let Some(dh) =
            self.modulated
                .backward(features, &dz, &mut grad.modulated, !self.hidden.is_empty())
        {
            trunk_backward(&self.hidden, &pass, dh, &mut grad.hidden);
        }
        (loss, grad)
    }

    /// Gradient of the loss with respect to the output weights only; the
    /// loss is convex in these.
    pub fn output_gradient(
        &self,
        x: &DMatrix<f64>,
        modulation: &DMatrix<f64>,
        targets: &DVector<f64>,
    ) -> (f64, DVector<f64>) {
        let b = targets.len().max(1) as f64;
        let pass = trunk_eval(&self.hidden, x);
        let m = self.modulate(pass.activations.last().expect("trunk output"), modulation);
        let residual = (m.tr_mul(&self.output) - targets) / b;
        (0.5 * b * residual.norm_squared(), &m * residual)
    }
}

impl ParamSet for PmnnParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.hidden.iter().flat_map(|l| l.tensors()).collect();
        out.extend(self.modulated.tensors());
        out.push(self.output.as_slice());
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self
            .hidden
            .iter_mut()
            .flat_map(|l| l.tensors_mut())
            .collect();
        out.extend(self.modulated.tensors_mut());
        out.push(self.output.as_mut_slice());
        out
    }

    fn zeros_like(&self) -> Self {
        PmnnParams {
            hidden: self.hidden.iter().map(|l| l.zeros_like()).collect(),
            modulated: self.modulated.zeros_like(),
            output: DVector::zeros(self.output.len()),
        }
    }
}

/// Single-sample evaluation on an already normalized input.
pub fn pmnn_forward(
    net: &PmnnParams,
    input: &[f64],
    phase: PhaseState,
    bank: &PhaseKernelBank,
) -> Result<f64> {
    check_dim("pmnn input", net.input_dim(), input.len())?;
    check_dim("pmnn kernel count", net.n_kernels(), bank.len())?;
    let x = DMatrix::from_column_slice(input.len(), 1, input);
    let g = DMatrix::from_vec(bank.len(), 1, bank.modulation(phase));
    Ok(net.forward_batch(&x, &g)[0])
}
