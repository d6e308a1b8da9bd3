//! Experiment configuration: one TOML document, overridden by flags.

use std::path::{Path, PathBuf};

use phasefb::feedback::Architecture;
use phasefb::pipeline::NominalConfig;
use phasefb::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SEED_ENV: &str = "PHASEFB_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: PathBuf,
    pub models: PathBuf,
    pub data: PathBuf,
    pub reports: PathBuf,
    /// Master seed for the simulator and training; mandatory, but may come
    /// from the command line or the environment instead.
    pub seed: Option<u64>,
    pub profile: String,
    /// Short architecture form, e.g. `pmnn-100` or `ffnn-100-25`.
    pub architecture: String,
    pub train: TrainConfig,
    pub nominal: NominalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus: "corpus".into(),
            models: "models".into(),
            data: "data".into(),
            reports: "reports".into(),
            seed: None,
            profile: "default".into(),
            architecture: "pmnn-100".into(),
            train: TrainConfig::default(),
            nominal: NominalConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| {
            CliError::Config(format!(
                "a seed is required: pass --seed, set {SEED_ENV}, or add `seed` to the config"
            ))
        })
    }

    pub fn architecture(&self) -> Result<Architecture, CliError> {
        Ok(self.architecture.parse()?)
    }

    /// Training settings with the master seed applied.
    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        Ok(TrainConfig {
            seed: self.seed()?,
            ..self.train.clone()
        })
    }
}
