//! Trained feedback model: input normalization, optional PCA, and one
//! network per coupling dimension.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::CouplingRow;
use super::ffnn::FfnnParams;
use super::layers::{Dropout, ParamSet};
use super::pca::Pca;
use super::pmnn::PmnnParams;
use crate::canonical::{PhaseKernelBank, PhaseState};
use crate::error::{check_dim, Error, Result};

/// Network family and size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    /// Phase-modulated network with the given regular hidden layers.
    Pmnn { hidden: Vec<usize> },
    /// Unmodulated tanh network with output bias; `phase_inputs` appends
    /// `(p, u)` to the deviation input.
    Ffnn {
        hidden: Vec<usize>,
        phase_inputs: bool,
    },
    /// Fixed PCA projection feeding a phase-modulated output stage.
    PcaPhase { retained: f64 },
}

impl Architecture {
    /// One regular hidden layer of 100 units.
    pub fn pmnn_default() -> Self {
        Architecture::Pmnn { hidden: vec![100] }
    }

    pub fn pmnn_linear() -> Self {
        Architecture::Pmnn { hidden: vec![] }
    }

    /// Hidden layers of 100 and 25 units over the deviation alone.
    pub fn ffnn_default() -> Self {
        Architecture::Ffnn {
            hidden: vec![100, 25],
            phase_inputs: false,
        }
    }

    pub fn pca_default() -> Self {
        Architecture::PcaPhase { retained: 0.99 }
    }

    pub fn label(&self) -> String {
        match self {
            Architecture::Pmnn { hidden } if hidden.is_empty() => "PMNN-0".into(),
            Architecture::Pmnn { hidden } => format!(
                "PMNN-{}",
                hidden
                    .iter()
                    .map(|h| h.to_string())
                    .collect::<Vec<_>>()
                    .join("-")
            ),
            Architecture::Ffnn {
                hidden,
                phase_inputs,
            } => format!(
                "FFNN({}){}",
                hidden
                    .iter()
                    .map(|h| h.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
                if *phase_inputs { "+pu" } else { "" }
            ),
            Architecture::PcaPhase { retained } => format!("PCA{:.0}+phase", retained * 100.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = match self {
            Architecture::Pmnn { hidden } | Architecture::Ffnn { hidden, .. } => hidden.as_slice(),
            Architecture::PcaPhase { retained } => {
                if !(*retained > 0.0 && *retained <= 1.0) {
                    return Err(Error::invalid("PCA retained fraction must lie in (0, 1]"));
                }
                &[]
            }
        };
        if sizes.contains(&0) {
            return Err(Error::invalid("hidden layers need at least one unit"));
        }
        Ok(())
    }
}

/// Parses the short forms `pmnn-100`, `pmnn-0`, `pmnn-50-20`,
/// `ffnn-100-25`, `ffnn-100-25+pu` and `pca-99` (retained variance in
/// percent). Labels from [`Architecture::label`] parse back as well.
impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let bad = || Error::invalid(format!("cannot parse architecture `{s}`"));
        let sizes = |rest: &str| -> Result<Vec<usize>> {
            rest.split(['-', ','])
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<usize>().map_err(|_| bad()))
                .filter(|v| !matches!(v, Ok(0)))
                .collect()
        };
        let arch = if let Some(rest) = lower.strip_prefix("pmnn-") {
            Architecture::Pmnn {
                hidden: sizes(rest)?,
            }
        } else if let Some(rest) = lower.strip_prefix("ffnn") {
            let (rest, phase_inputs) = match rest.strip_suffix("+pu") {
                Some(r) => (r, true),
                None => (rest, false),
            };
            let rest = rest
                .trim_start_matches('-')
                .trim_start_matches('(')
                .trim_end_matches(')');
            Architecture::Ffnn {
                hidden: sizes(rest)?,
                phase_inputs,
            }
        } else if let Some(rest) = lower.strip_prefix("pca") {
            let pct = rest.trim_start_matches('-').trim_end_matches("+phase");
            let pct: f64 = pct.parse().map_err(|_| bad())?;
            Architecture::PcaPhase {
                retained: pct / 100.0,
            }
        } else {
            return Err(bad());
        };
        arch.validate()?;
        Ok(arch)
    }
}

/// Per-channel z-score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputNormalization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl InputNormalization {
    pub fn identity(dim: usize) -> Self {
        InputNormalization {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Channels with (near) zero spread keep unit scale.
    pub fn fit<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize) -> Result<Self> {
        let mut n = 0usize;
        let mut mean = vec![0.0; dim];
        let mut m2 = vec![0.0; dim];
        for x in rows {
            check_dim("normalization input", dim, x.len())?;
            n += 1;
            for k in 0..dim {
                let d = x[k] - mean[k];
                mean[k] += d / n as f64;
                m2[k] += d * (x[k] - mean[k]);
            }
        }
        if n == 0 {
            return Err(Error::TooShort { needed: 1, got: 0 });
        }
        let scale = m2
            .iter()
            .map(|s| {
                let sd = (s / n as f64).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(InputNormalization { mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

/// Network inputs for a batch, column per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureBatch {
    pub inputs: DMatrix<f64>,
    /// `ψ̄(p)·u`, `N × B`.
    pub modulation: DMatrix<f64>,
}

impl FeatureBatch {
    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.ncols() == 0
    }

    pub fn select(&self, columns: &[usize]) -> FeatureBatch {
        FeatureBatch {
            inputs: self.inputs.select_columns(columns),
            modulation: self.modulation.select_columns(columns),
        }
    }
}

/// Everything between a raw deviation vector and the network input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputPipeline {
    pub normalization: InputNormalization,
    pub pca: Option<Pca>,
    pub phase_inputs: bool,
}

impl InputPipeline {
    pub fn raw_dim(&self) -> usize {
        self.normalization.dim()
    }

    pub fn network_dim(&self) -> usize {
        let base = self
            .pca
            .as_ref()
            .map_or(self.raw_dim(), |p| p.n_components());
        base + if self.phase_inputs { 2 } else { 0 }
    }

    pub fn features(&self, deviation: &[f64], phase: PhaseState) -> Result<Vec<f64>> {
        check_dim("deviation input", self.raw_dim(), deviation.len())?;
        let z = self.normalization.apply(deviation);
        let mut x = match &self.pca {
            Some(p) => p.transform(&z)?,
            None => z,
        };
        if self.phase_inputs {
            x.push(phase.p);
            x.push(phase.u);
        }
        Ok(x)
    }

    pub fn batch<'a>(
        &self,
        samples: impl ExactSizeIterator<Item = (&'a [f64], PhaseState)>,
        bank: &PhaseKernelBank,
    ) -> Result<FeatureBatch> {
        let n = samples.len();
        let mut inputs = DMatrix::zeros(self.network_dim(), n);
        let mut modulation = DMatrix::zeros(bank.len(), n);
        for (j, (dev, phase)) in samples.enumerate() {
            inputs.set_column(j, &DVector::from_vec(self.features(dev, phase)?));
            modulation.set_column(j, &DVector::from_vec(bank.modulation(phase)));
        }
        Ok(FeatureBatch { inputs, modulation })
    }

    pub fn batch_rows(&self, rows: &[CouplingRow], bank: &PhaseKernelBank) -> Result<FeatureBatch> {
        self.batch(rows.iter().map(|r| (r.deviation.as_slice(), r.phase)), bank)
    }
}

/// One network of either family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum Network {
    Pmnn(PmnnParams),
    Ffnn(FfnnParams),
}

impl Network {
    pub fn init<R: Rng + ?Sized>(
        arch: &Architecture,
        input_dim: usize,
        n_kernels: usize,
        rng: &mut R,
    ) -> Self {
        match arch {
            Architecture::Pmnn { hidden } => {
                Network::Pmnn(PmnnParams::init(input_dim, hidden, n_kernels, rng))
            }
            Architecture::PcaPhase { .. } => {
                Network::Pmnn(PmnnParams::init(input_dim, &[], n_kernels, rng))
            }
            Architecture::Ffnn { hidden, .. } => {
                Network::Ffnn(FfnnParams::init(input_dim, hidden, rng))
            }
        }
    }

    pub fn zeros(arch: &Architecture, input_dim: usize, n_kernels: usize) -> Self {
        match arch {
            Architecture::Pmnn { hidden } => {
                Network::Pmnn(PmnnParams::zeros(input_dim, hidden, n_kernels))
            }
            Architecture::PcaPhase { .. } => {
                Network::Pmnn(PmnnParams::zeros(input_dim, &[], n_kernels))
            }
            Architecture::Ffnn { hidden, .. } => {
                Network::Ffnn(FfnnParams::zeros(input_dim, hidden))
            }
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Network::Pmnn(p) => p.input_dim(),
            Network::Ffnn(f) => f.input_dim(),
        }
    }

    pub fn forward(&self, batch: &FeatureBatch) -> DVector<f64> {
        match self {
            Network::Pmnn(p) => p.forward_batch(&batch.inputs, &batch.modulation),
            Network::Ffnn(f) => f.forward_batch(&batch.inputs),
        }
    }

    pub fn loss_and_gradient<R: Rng + ?Sized>(
        &self,
        batch: &FeatureBatch,
        targets: &DVector<f64>,
        dropout: Option<(&Dropout, &mut R)>,
    ) -> (f64, Network) {
        match self {
            Network::Pmnn(p) => {
                let (l, g) =
                    p.loss_and_gradient(&batch.inputs, &batch.modulation, targets, dropout);
                (l, Network::Pmnn(g))
            }
            Network::Ffnn(f) => {
                let (l, g) = f.loss_and_gradient(&batch.inputs, targets, dropout);
                (l, Network::Ffnn(g))
            }
        }
    }
}

impl ParamSet for Network {
    fn tensors(&self) -> Vec<&[f64]> {
        match self {
            Network::Pmnn(p) => p.tensors(),
            Network::Ffnn(f) => f.tensors(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Network::Pmnn(p) => p.tensors_mut(),
            Network::Ffnn(f) => f.tensors_mut(),
        }
    }

    fn zeros_like(&self) -> Self {
        match self {
            Network::Pmnn(p) => Network::Pmnn(p.zeros_like()),
            Network::Ffnn(f) => Network::Ffnn(f.zeros_like()),
        }
    }
}

/// `M` independent networks sharing one input pipeline and kernel bank.
/// Network outputs are multiplied by `output_scale` to give couplings in
/// physical units; a pure scale keeps the zero at `u = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackModel {
    pub architecture: Architecture,
    pub pipeline: InputPipeline,
    pub bank: PhaseKernelBank,
    pub networks: Vec<Network>,
    pub output_scale: Vec<f64>,
}

impl FeedbackModel {
    pub fn new(
        architecture: Architecture,
        pipeline: InputPipeline,
        bank: PhaseKernelBank,
        networks: Vec<Network>,
        output_scale: Vec<f64>,
    ) -> Result<Self> {
        architecture.validate()?;
        if networks.is_empty() {
            return Err(Error::invalid(
                "a feedback model needs at least one network",
            ));
        }
        check_dim("output scales", networks.len(), output_scale.len())?;
        for n in &networks {
            check_dim("network input", pipeline.network_dim(), n.input_dim())?;
            if let Network::Pmnn(p) = n {
                check_dim("network kernel count", bank.len(), p.n_kernels())?;
            }
        }
        if output_scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid("output scales must be positive"));
        }
        Ok(FeedbackModel {
            architecture,
            pipeline,
            bank,
            networks,
            output_scale,
        })
    }

    /// All-zero networks: predicts zero coupling everywhere (FFNN output
    /// bias included).
    pub fn untrained(
        architecture: Architecture,
        sensor_dim: usize,
        coupling_dim: usize,
        bank: PhaseKernelBank,
    ) -> Result<Self> {
        let pipeline = InputPipeline {
            normalization: InputNormalization::identity(sensor_dim),
            pca: match architecture {
                Architecture::PcaPhase { .. } => Some(Pca::identity(sensor_dim)),
                _ => None,
            },
            phase_inputs: matches!(
                architecture,
                Architecture::Ffnn {
                    phase_inputs: true,
                    ..
                }
            ),
        };
        let dim = pipeline.network_dim();
        let networks = (0..coupling_dim)
            .map(|_| Network::zeros(&architecture, dim, bank.len()))
            .collect();
        Self::new(
            architecture,
            pipeline,
            bank,
            networks,
            vec![1.0; coupling_dim],
        )
    }

    pub fn sensor_dim(&self) -> usize {
        self.pipeline.raw_dim()
    }

    pub fn coupling_dim(&self) -> usize {
        self.networks.len()
    }

    /// Coupling for one deviation sample at the given phase.
    pub fn predict_coupling(&self, deviation: &[f64], phase: PhaseState) -> Result<Vec<f64>> {
        let batch = self
            .pipeline
            .batch(std::iter::once((deviation, phase)), &self.bank)?;
        Ok(self
            .networks
            .iter()
            .zip(&self.output_scale)
            .map(|(n, s)| n.forward(&batch)[0] * s)
            .collect())
    }

    /// Predictions in physical units, one vector per coupling dimension.
    pub fn predict_batch(&self, batch: &FeatureBatch) -> Vec<DVector<f64>> {
        self.networks
            .iter()
            .zip(&self.output_scale)
            .map(|(n, s)| n.forward(batch) * *s)
            .collect()
    }
}
