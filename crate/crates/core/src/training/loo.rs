//! Leave-one-demonstration-out evaluation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::mean_std;
use super::split::split_dataset;
use super::train::{nan_as_null, train_model, SplitScores, TrainConfig};
use crate::canonical::PhaseKernelBank;
use crate::error::{Error, Result};
use crate::feedback::{Architecture, CouplingTargetDataset, FeedbackModel};

/// Generalization error restricted to one setting, normalized by the
/// variance of the whole held-out demonstration so that near-constant
/// settings (0°) do not blow up.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingScore {
    pub setting_deg: f64,
    #[serde(with = "nan_as_null")]
    pub nmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub held_out_demo: usize,
    pub seed: u64,
    pub scores: SplitScores,
    pub best_steps: Vec<usize>,
    pub per_setting: Vec<SettingScore>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
}

impl MetricSummary {
    fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        mean_std(values).map(|(mean, std)| MetricSummary { mean, std })
    }
}

impl std::fmt::Display for MetricSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.3}±{:.3}", self.mean, self.std)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingSummary {
    pub setting_deg: f64,
    pub generalization: Option<MetricSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub architecture: String,
    pub folds: Vec<FoldResult>,
    pub train: Option<MetricSummary>,
    pub validation: Option<MetricSummary>,
    pub test: Option<MetricSummary>,
    pub generalization: Option<MetricSummary>,
    pub per_setting: Vec<SettingSummary>,
}

impl EvalReport {
    fn from_folds(architecture: &Architecture, folds: Vec<FoldResult>) -> Self {
        let summary =
            |f: fn(&SplitScores) -> f64| MetricSummary::of(folds.iter().map(|r| f(&r.scores)));
        let mut settings: Vec<f64> = folds
            .iter()
            .flat_map(|f| f.per_setting.iter().map(|s| s.setting_deg))
            .collect();
        settings.sort_by(f64::total_cmp);
        settings.dedup();
        let per_setting = settings
            .into_iter()
            .map(|deg| SettingSummary {
                setting_deg: deg,
                generalization: MetricSummary::of(
                    folds
                        .iter()
                        .flat_map(|f| f.per_setting.iter())
                        .filter(|s| s.setting_deg == deg)
                        .map(|s| s.nmse),
                ),
            })
            .collect();
        EvalReport {
            architecture: architecture.label(),
            train: summary(|s| s.train),
            validation: summary(|s| s.validation),
            test: summary(|s| s.test),
            generalization: summary(|s| s.generalization),
            per_setting,
            folds,
        }
    }

    pub fn fold_count(&self) -> usize {
        self.folds.len()
    }

    /// Mean generalization NMSE, `NaN` when no fold produced one.
    pub fn mean_generalization(&self) -> f64 {
        self.generalization.map_or(f64::NAN, |s| s.mean)
    }
}

/// Fixed-width table with one row per labelled report.
pub fn format_report_table(rows: &[(String, &EvalReport)]) -> String {
    let cell = |s: Option<MetricSummary>| s.map_or("n/a".to_string(), |m| m.to_string());
    let width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(5);
    let mut out = format!(
        "{:<width$}  {:>13}  {:>13}  {:>13}  {:>14}\n",
        "", "Training", "Validation", "Testing", "Generalization"
    );
    for (label, r) in rows {
        out.push_str(&format!(
            "{:<width$}  {:>13}  {:>13}  {:>13}  {:>14}\n",
            label,
            cell(r.train),
            cell(r.validation),
            cell(r.test),
            cell(r.generalization)
        ));
    }
    out
}

/// One training run per demonstration id, holding that demonstration out.
/// Fold `k` (in ascending id order) uses seed `config.seed + k`; folds run
/// in parallel but each owns its state, so results do not depend on the
/// thread count.
pub fn loo_evaluate(
    dataset: &CouplingTargetDataset,
    architecture: &Architecture,
    bank: &PhaseKernelBank,
    config: &TrainConfig,
) -> Result<EvalReport> {
    config.validate()?;
    let ids = dataset.demo_ids();
    if ids.len() < 2 {
        return Err(Error::invalid(
            "leave-one-out needs at least two demonstrations",
        ));
    }
    let folds = ids
        .par_iter()
        .enumerate()
        .map(|(fold, &demo)| {
            run_fold(dataset, architecture, bank, config, fold, demo).map_err(|e| Error::Fold {
                fold,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_folds(architecture, folds))
}

fn run_fold(
    dataset: &CouplingTargetDataset,
    architecture: &Architecture,
    bank: &PhaseKernelBank,
    config: &TrainConfig,
    fold: usize,
    demo: usize,
) -> Result<FoldResult> {
    let seed = config.seed.wrapping_add(fold as u64);
    let cfg = TrainConfig {
        seed,
        ..config.clone()
    };
    let split = split_dataset(dataset, demo, seed)?;
    let trained = train_model(dataset, &split, architecture, bank, &cfg)?;
    Ok(FoldResult {
        fold,
        held_out_demo: demo,
        seed,
        scores: trained.scores,
        best_steps: trained.best_steps,
        per_setting: setting_scores(&trained.model, dataset, &split.generalization)?,
    })
}

fn setting_scores(
    model: &FeedbackModel,
    dataset: &CouplingTargetDataset,
    rows: &[usize],
) -> Result<Vec<SettingScore>> {
    let all = dataset.rows();
    let batch = model.pipeline.batch(
        rows.iter()
            .map(|&i| (all[i].deviation.as_slice(), all[i].phase)),
        &model.bank,
    )?;
    let preds = model.predict_batch(&batch);
    let sub = dataset.subset(rows);
    let mut out = Vec::new();
    for deg in sub.settings() {
        let mut total = 0.0;
        for (m, pred) in preds.iter().enumerate() {
            let targets = sub.targets(m);
            let n = targets.len() as f64;
            let mean = targets.iter().sum::<f64>() / n;
            let var = targets.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
            let (se, count) = sub
                .rows()
                .iter()
                .zip(pred.iter())
                .filter(|(r, _)| r.setting_deg == deg)
                .fold((0.0, 0usize), |(s, c), (r, p)| {
                    (s + (p - r.target[m]).powi(2), c + 1)
                });
            total += if var > 1e-300 {
                se / count as f64 / var
            } else {
                f64::NAN
            };
        }
        out.push(SettingScore {
            setting_deg: deg,
            nmse: total / preds.len() as f64,
        });
    }
    Ok(out)
}
