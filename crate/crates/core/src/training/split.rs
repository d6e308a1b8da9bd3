//! Leave-one-demonstration-out partitioning.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::CouplingTargetDataset;

pub const TRAIN_FRACTION: f64 = 0.85;
pub const VALIDATION_FRACTION: f64 = 0.075;

/// Row indices of the four evaluation sets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub generalization: Vec<usize>,
}

impl DatasetSplit {
    pub fn total(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len() + self.generalization.len()
    }
}

/// Every row of demo `held_out` (all settings) goes to the generalization
/// set; the rest are shuffled by `seed` and cut 85 / 7.5 / 7.5.
pub fn split_dataset(
    dataset: &CouplingTargetDataset,
    held_out: usize,
    seed: u64,
) -> Result<DatasetSplit> {
    let ids = dataset.demo_ids();
    if ids.len() < 2 {
        return Err(Error::invalid(
            "leave-one-out needs at least two demonstrations",
        ));
    }
    if !ids.contains(&held_out) {
        return Err(Error::UnknownDemo(held_out));
    }
    let (generalization, rest): (Vec<usize>, Vec<usize>) =
        (0..dataset.len()).partition(|&i| dataset.rows()[i].demo_id == held_out);
    Ok(cut(rest, generalization, seed))
}

/// Same 85 / 7.5 / 7.5 cut over all rows, with no held-out demonstration.
pub fn split_without_holdout(dataset: &CouplingTargetDataset, seed: u64) -> Result<DatasetSplit> {
    if dataset.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    Ok(cut((0..dataset.len()).collect(), Vec::new(), seed))
}

fn cut(mut rest: Vec<usize>, generalization: Vec<usize>, seed: u64) -> DatasetSplit {
    rest.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = rest.len();
    let n_val = (VALIDATION_FRACTION * n as f64).round() as usize;
    let n_test = n_val;
    let n_train = n - n_val - n_test;
    let test = rest.split_off(n_train + n_val);
    let validation = rest.split_off(n_train);
    DatasetSplit {
        train: rest,
        validation,
        test,
        generalization,
    }
}
