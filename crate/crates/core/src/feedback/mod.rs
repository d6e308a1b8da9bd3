//! Feedback models mapping sensor deviations (and phase) to coupling terms.

mod coupling;
mod dataset;
mod ffnn;
mod layers;
mod model;
mod pca;
mod pmnn;

pub use coupling::extract_coupling_target;
pub use dataset::{CouplingRow, CouplingTargetDataset};
pub use ffnn::{ffnn_forward, FfnnParams};
pub use layers::{DenseLayer, Dropout, ParamSet};
pub use model::{
    Architecture, FeatureBatch, FeedbackModel, InputNormalization, InputPipeline, Network,
};
pub use pca::{pca_fit, Pca};
pub use pmnn::{pmnn_forward, PmnnParams};
