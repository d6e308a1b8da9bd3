//! Plain feed-forward baseline: tanh hidden layers and a linear output with
//! bias. Optionally sees `(p, u)` appended to its input.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{trunk_backward, trunk_eval, trunk_forward, DenseLayer, Dropout, ParamSet};
use crate::error::{check_dim, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FfnnParams {
    hidden: Vec<DenseLayer>,
    output: DenseLayer,
}

impl FfnnParams {
    pub fn new(hidden: Vec<DenseLayer>, output: DenseLayer) -> Result<Self> {
        for pair in hidden.windows(2) {
            check_dim("hidden layer chain", pair[0].outputs(), pair[1].inputs())?;
        }
        if let Some(last) = hidden.last() {
            check_dim("output layer inputs", last.outputs(), output.inputs())?;
        }
        check_dim("output layer width", 1, output.outputs())?;
        Ok(FfnnParams { hidden, output })
    }

    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden_sizes: &[usize], rng: &mut R) -> Self {
        let mut hidden = Vec::with_capacity(hidden_sizes.len());
        let mut width = input_dim;
        for &h in hidden_sizes {
            hidden.push(DenseLayer::glorot(width, h, rng));
            width = h;
        }
        FfnnParams {
            hidden,
            output: DenseLayer::glorot(width, 1, rng),
        }
    }

    pub fn zeros(input_dim: usize, hidden_sizes: &[usize]) -> Self {
        let mut hidden = Vec::with_capacity(hidden_sizes.len());
        let mut width = input_dim;
        for &h in hidden_sizes {
            hidden.push(DenseLayer::zeros(width, h));
            width = h;
        }
        FfnnParams {
            hidden,
            output: DenseLayer::zeros(width, 1),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.first().unwrap_or(&self.output).inputs()
    }

    pub fn hidden(&self) -> &[DenseLayer] {
        &self.hidden
    }

    pub fn output(&self) -> &DenseLayer {
        &self.output
    }

    pub fn output_mut(&mut self) -> &mut DenseLayer {
        &mut self.output
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.hidden.iter().map(|l| l.outputs()).collect()
    }

    pub fn forward_batch(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let pass = trunk_eval(&self.hidden, x);
        self.output
            .affine(pass.activations.last().expect("trunk output"))
            .row(0)
            .transpose()
    }

    pub fn loss_and_gradient<R: Rng + ?Sized>(
        &self,
        x: &DMatrix<f64>,
        targets: &DVector<f64>,
        dropout: Option<(&Dropout, &mut R)>,
    ) -> (f64, FfnnParams) {
        let b = targets.len().max(1) as f64;
        let pass = trunk_forward(&self.hidden, x, dropout);
        let features = pass.activations.last().expect("trunk output");
        let c = self.output.affine(features).row(0).transpose();
        let residual = (c - targets) / b;
        let loss = 0.5 * b * residual.norm_squared();

        let mut grad = self.zeros_like();
        let delta = DMatrix::from_row_slice(1, residual.len(), residual.as_slice());
        if let Some(dh) =
            self.output
                .backward(features, &delta, &mut grad.output, !self.hidden.is_empty())
        {
            trunk_backward(&self.hidden, &pass, dh, &mut grad.hidden);
        }
        (loss, grad)
    }
}

impl ParamSet for FfnnParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.hidden.iter().flat_map(|l| l.tensors()).collect();
        out.extend(self.output.tensors());
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self
            .hidden
            .iter_mut()
            .flat_map(|l| l.tensors_mut())
            .collect();
        out.extend(self.output.tensors_mut());
        out
    }

    fn zeros_like(&self) -> Self {
        FfnnParams {
            hidden: self.hidden.iter().map(|l| l.zeros_like()).collect(),
            output: self.output.zeros_like(),
        }
    }
}

/// Single-sample evaluation.
pub fn ffnn_forward(net: &FfnnParams, input: &[f64]) -> Result<f64> {
    check_dim("ffnn input", net.input_dim(), input.len())?;
    Ok(net.forward_batch(&DMatrix::from_column_slice(input.len(), 1, input))[0])
}
