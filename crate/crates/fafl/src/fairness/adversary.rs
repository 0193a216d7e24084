//! Label-flipping adversary: the canonical poisoning baseline.
//!
//! An adversarial client trains on its shard with every label rotated
//! `y -> (y + 1) mod C` and submits the resulting update as if honest.

use crate::data::LabeledDataset;
use crate::error::Result;
use crate::model::{local_train, ParamVector, TrainConfig, TrainOutcome};

/// Rotate every label by one class.
pub fn flip_labels(data: &LabeledDataset) -> Result<LabeledDataset> {
    let c = data.class_count();
    let flipped: Vec<u32> = data.labels().iter().map(|&y| (y + 1) % c).collect();
    let mut features = Vec::with_capacity(data.n() * data.dim());
    for i in 0..data.n() {
        features.extend_from_slice(data.row(i));
    }
    LabeledDataset::new(features, data.dim(), flipped, c, data.groups().map(|g| g.to_vec()))
}

/// Train on the label-flipped shard and return the poisoned update.
pub fn make_adversarial_update(
    shard: &LabeledDataset,
    w: &ParamVector,
    cfg: &TrainConfig,
    round: usize,
) -> Result<TrainOutcome> {
    let poisoned = flip_labels(shard)?;
    local_train(w, &poisoned, cfg, round)
}
