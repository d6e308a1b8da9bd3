//! Optimization, data splitting, metrics and the leave-one-out protocol.

mod dominance;
mod loo;
mod metrics;
mod optimizer;
mod split;
mod train;

pub use dominance::{dominance_analysis, write_dominance_csv, KernelRanking, TOP_FEATURES};
pub use loo::{
    format_report_table, loo_evaluate, EvalReport, FoldResult, MetricSummary, SettingScore,
};
pub use metrics::{mean_std, nmse};
pub use optimizer::{rmsprop_step, RmsPropConfig, RmsPropState};
pub use split::{
    split_dataset, split_without_holdout, DatasetSplit, TRAIN_FRACTION, VALIDATION_FRACTION,
};
pub use train::{
    fit_pipeline, train_model, CurvePoint, LearningCurves, Selection, SplitScores, TrainConfig,
    TrainedModel,
};
