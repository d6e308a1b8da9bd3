//! Mini-batch RMSProp training with snapshot selection.

use std::io::Write;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::nmse;
use super::optimizer::{rmsprop_step, RmsPropConfig, RmsPropState};
use super::split::DatasetSplit;
use crate::canonical::PhaseKernelBank;
use crate::error::{Error, Result};
use crate::feedback::{
    pca_fit, Architecture, CouplingTargetDataset, Dropout, FeatureBatch, FeedbackModel,
    InputNormalization, InputPipeline, Network,
};

/// Which curve picks the returned snapshot.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Lowest NMSE on the held-out demonstration. This peeks at the
    /// evaluation data; kept because it is the reference protocol.
    #[default]
    Generalization,
    /// Lowest NMSE on the validation rows.
    Validation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    pub dropout: f64,
    pub check_interval: usize,
    pub seed: u64,
    pub selection: Selection,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let opt = RmsPropConfig::default();
        TrainConfig {
            learning_rate: opt.learning_rate,
            decay: opt.decay,
            epsilon: opt.epsilon,
            batch_size: 64,
            max_steps: 5000,
            dropout: 0.5,
            check_interval: 50,
            seed: 0,
            selection: Selection::Generalization,
        }
    }
}

impl TrainConfig {
    pub fn optimizer(&self) -> RmsPropConfig {
        RmsPropConfig {
            learning_rate: self.learning_rate,
            decay: self.decay,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer().validate()?;
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if self.check_interval == 0 {
            return Err(Error::invalid("check interval must be at least 1"));
        }
        Dropout::new(self.dropout).map(|_| ())
    }
}

/// NMSE on each evaluation set; `NaN` where a set is empty or constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitScores {
    #[serde(with = "nan_as_null")]
    pub train: f64,
    #[serde(with = "nan_as_null")]
    pub validation: f64,
    #[serde(with = "nan_as_null")]
    pub test: f64,
    #[serde(with = "nan_as_null")]
    pub generalization: f64,
}

/// JSON has no NaN; missing scores travel as `null`.
pub(crate) mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

impl SplitScores {
    fn mean(all: &[SplitScores]) -> SplitScores {
        let avg = |f: fn(&SplitScores) -> f64| all.iter().map(f).sum::<f64>() / all.len() as f64;
        SplitScores {
            train: avg(|s| s.train),
            validation: avg(|s| s.validation),
            test: avg(|s| s.test),
            generalization: avg(|s| s.generalization),
        }
    }

    fn selection_score(&self, selection: Selection) -> f64 {
        let order = match selection {
            Selection::Generalization => [self.generalization, self.validation, self.train],
            Selection::Validation => [self.validation, self.train, self.train],
        };
        order
            .into_iter()
            .find(|v| v.is_finite())
            .unwrap_or(f64::INFINITY)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub scores: SplitScores,
}

/// Learning curves averaged over coupling dimensions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LearningCurves {
    pub points: Vec<CurvePoint>,
}

impl LearningCurves {
    /// CSV `step,train,val,test,gen`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["step", "train", "val", "test", "gen"])?;
        for p in &self.points {
            let s = p.scores;
            w.write_record([
                p.step.to_string(),
                s.train.to_string(),
                s.validation.to_string(),
                s.test.to_string(),
                s.generalization.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn last(&self) -> Option<&CurvePoint> {
        self.points.last()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub model: FeedbackModel,
    pub curves: LearningCurves,
    /// Selected step per coupling dimension.
    pub best_steps: Vec<usize>,
    /// Scores of the returned model.
    pub scores: SplitScores,
}

/// Feature batches and physical-unit targets for one evaluation set.
struct EvalSet {
    batch: FeatureBatch,
    targets: Vec<DVector<f64>>,
}

impl EvalSet {
    fn build(
        dataset: &CouplingTargetDataset,
        indices: &[usize],
        pipeline: &InputPipeline,
        bank: &PhaseKernelBank,
    ) -> Result<Self> {
        let rows = dataset.rows();
        let batch = pipeline.batch(
            indices
                .iter()
                .map(|&i| (rows[i].deviation.as_slice(), rows[i].phase)),
            bank,
        )?;
        let targets = (0..dataset.coupling_dim())
            .map(|m| {
                DVector::from_iterator(indices.len(), indices.iter().map(|&i| rows[i].target[m]))
            })
            .collect();
        Ok(EvalSet { batch, targets })
    }

    fn score(&self, net: &Network, dim: usize, scale: f64) -> f64 {
        if self.batch.is_empty() {
            return f64::NAN;
        }
        let pred = net.forward(&self.batch) * scale;
        nmse(pred.as_slice(), self.targets[dim].as_slice()).unwrap_or(f64::NAN)
    }
}

/// Input pipeline fitted on the training rows only.
pub fn fit_pipeline(
    dataset: &CouplingTargetDataset,
    train: &[usize],
    architecture: &Architecture,
) -> Result<InputPipeline> {
    let rows = dataset.rows();
    let normalization = InputNormalization::fit(
        train.iter().map(|&i| rows[i].deviation.as_slice()),
        dataset.sensor_dim(),
    )?;
    let pca = match architecture {
        Architecture::PcaPhase { retained } => {
            let data = nalgebra::DMatrix::from_fn(train.len(), dataset.sensor_dim(), |r, c| {
                let row = &rows[train[r]];
                (row.deviation[c] - normalization.mean[c]) / normalization.scale[c]
            });
            Some(pca_fit(&data, *retained)?)
        }
        _ => None,
    };
    Ok(InputPipeline {
        normalization,
        pca,
        phase_inputs: matches!(
            architecture,
            Architecture::Ffnn {
                phase_inputs: true,
                ..
            }
        ),
    })
}

/// Trains one network per coupling dimension on `split.train` and keeps,
/// per network, the checked snapshot with the lowest selection score.
pub fn train_model(
    dataset: &CouplingTargetDataset,
    split: &DatasetSplit,
    architecture: &Architecture,
    bank: &PhaseKernelBank,
    config: &TrainConfig,
) -> Result<TrainedModel> {
    config.validate()?;
    architecture.validate()?;
    if split.train.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    if split.total() > dataset.len() || split_indices(split).any(|i| i >= dataset.len()) {
        return Err(Error::invalid("split refers to rows outside the dataset"));
    }
    let pipeline = fit_pipeline(dataset, &split.train, architecture)?;
    let sets = [
        &split.train,
        &split.validation,
        &split.test,
        &split.generalization,
    ]
    .map(|idx| EvalSet::build(dataset, idx, &pipeline, bank));
    let [train, validation, test, generalization] = sets;
    let sets = [train?, validation?, test?, generalization?];

    let dropout = if config.dropout > 0.0 {
        Some(Dropout::new(config.dropout)?)
    } else {
        None
    };
    let mut networks = Vec::new();
    let mut best_steps = Vec::new();
    let mut output_scale = Vec::new();
    let mut per_dim_curves = Vec::new();
    for m in 0..dataset.coupling_dim() {
        let t = &sets[0].targets[m];
        let rms = (t.norm_squared() / t.len() as f64).sqrt();
        let scale = if rms > 1e-12 { rms } else { 1.0 };
        let run = train_network(
            &sets,
            m,
            scale,
            architecture,
            &pipeline,
            bank,
            dropout.as_ref(),
            config,
        )?;
        networks.push(run.best);
        best_steps.push(run.best_step);
        output_scale.push(scale);
        per_dim_curves.push(run.curve);
    }

    let points = (0..per_dim_curves[0].len())
        .map(|k| CurvePoint {
            step: per_dim_curves[0][k].step,
            scores: SplitScores::mean(
                &per_dim_curves
                    .iter()
                    .map(|c| c[k].scores)
                    .collect::<Vec<_>>(),
            ),
        })
        .collect();
    let model = FeedbackModel::new(
        architecture.clone(),
        pipeline,
        bank.clone(),
        networks,
        output_scale,
    )?;
    let scores = SplitScores::mean(
        &(0..model.coupling_dim())
            .map(|m| scores_of(&sets, &model.networks[m], m, model.output_scale[m]))
            .collect::<Vec<_>>(),
    );
    Ok(TrainedModel {
        model,
        curves: LearningCurves { points },
        best_steps,
        scores,
    })
}

fn split_indices(split: &DatasetSplit) -> impl Iterator<Item = usize> + '_ {
    split
        .train
        .iter()
        .chain(&split.validation)
        .chain(&split.test)
        .chain(&split.generalization)
        .copied()
}

fn scores_of(sets: &[EvalSet; 4], net: &Network, dim: usize, scale: f64) -> SplitScores {
    SplitScores {
        train: sets[0].score(net, dim, scale),
        validation: sets[1].score(net, dim, scale),
        test: sets[2].score(net, dim, scale),
        generalization: sets[3].score(net, dim, scale),
    }
}

struct NetworkRun {
    best: Network,
    best_step: usize,
    curve: Vec<CurvePoint>,
}

#[allow(clippy::too_many_arguments)]
fn train_network(
    sets: &[EvalSet; 4],
    dim: usize,
    scale: f64,
    architecture: &Architecture,
    pipeline: &InputPipeline,
    bank: &PhaseKernelBank,
    dropout: Option<&Dropout>,
    config: &TrainConfig,
) -> Result<NetworkRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(dim as u64);
    let mut net = Network::init(architecture, pipeline.network_dim(), bank.len(), &mut rng);
    let mut state = RmsPropState::new(&net);
    let optimizer = config.optimizer();

    let train = &sets[0];
    let scaled = &train.targets[dim] / scale;
    let n = train.batch.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;

    let first = scores_of(sets, &net, dim, scale);
    let mut curve = vec![CurvePoint {
        step: 0,
        scores: first,
    }];
    let mut best = net.clone();
    let mut best_step = 0;
    let mut best_score = first.selection_score(config.selection);

    for step in 1..=config.max_steps {
        let size = config.batch_size.min(n);
        if cursor + size > n {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let idx = &order[cursor..cursor + size];
        cursor += size;
        let batch = train.batch.select(idx);
        let targets = DVector::from_iterator(size, idx.iter().map(|&i| scaled[i]));
        let (loss, grad) = net.loss_and_gradient(&batch, &targets, dropout.map(|d| (d, &mut rng)));
        if !loss.is_finite() {
            return Err(Error::Divergence { step, loss });
        }
        rmsprop_step(&mut net, &grad, &mut state, &optimizer)?;

        if step % config.check_interval == 0 || step == config.max_steps {
            let scores = scores_of(sets, &net, dim, scale);
            curve.push(CurvePoint { step, scores });
            let s = scores.selection_score(config.selection);
            if s < best_score {
                best_score = s;
                best = net.clone();
                best_step = step;
            }
        }
    }
    Ok(NetworkRun {
        best,
        best_step,
        curve,
    })
}
