//! Losses, Adam, and the joint training loops for divergence models.

pub mod adam;
pub mod loss;
pub mod mahalanobis;
pub mod regression;
pub mod triplet;

use serde::{Deserialize, Serialize};

use crate::divergence::{DivergenceModel, ModelGenerator};
use crate::error::{NbdError, Result};

pub use adam::{AdamConfig, AdamState};
pub use loss::{
    mae, mine_from_matrix, mine_triplets, mse_loss, triplet_coefficients, triplet_loss,
    triplet_loss_from_matrix, TripletBatch,
};
pub use mahalanobis::{train_mahalanobis, MahalanobisBaseline};
pub use regression::{eval_regression, train_regression, RegressionEval};
pub use triplet::train_triplet;

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Triplet hinge margin.
    pub margin: f64,
    pub seed: u64,
    /// Optional second constant-rate phase: (start epoch, learning rate).
    pub lr_drop: Option<(usize, f64)>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 128,
            learning_rate: 1e-3,
            margin: 0.2,
            seed: 0,
            lr_drop: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(NbdError::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(NbdError::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn lr_at_epoch(&self, epoch: usize) -> f64 {
        match self.lr_drop {
            Some((start, lr)) if epoch >= start => lr,
            _ => self.learning_rate,
        }
    }
}

/// One row of a loss trace: `(epoch, split, loss)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
}

/// Per-epoch loss trace, serialized as CSV `epoch,split,loss`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossTrace {
    pub rows: Vec<TraceRow>,
}

impl LossTrace {
    pub fn push(&mut self, epoch: usize, split: &str, loss: f64) {
        self.rows.push(TraceRow { epoch, split: split.to_string(), loss });
    }

    /// Losses of one split in epoch order.
    pub fn split_losses(&self, split: &str) -> Vec<f64> {
        self.rows.iter().filter(|r| r.split == split).map(|r| r.loss).collect()
    }

    pub fn final_loss(&self, split: &str) -> Option<f64> {
        self.split_losses(split).last().copied()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,split,loss\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.epoch, r.split, r.loss));
        }
        out
    }
}

/// Names of every trainable block of a model, encoder first, aligned with
/// the tape ids of [`crate::divergence::BoundModel::param_ids`].
pub fn model_block_names(model: &DivergenceModel) -> Vec<String> {
    let mut names = model.encoder.block_names();
    if let ModelGenerator::Icnn(p) = &model.generator {
        names.extend(p.block_names());
    }
    names
}

pub fn model_blocks(model: &DivergenceModel) -> Vec<&[f64]> {
    let mut blocks = model.encoder.blocks();
    if let ModelGenerator::Icnn(p) = &model.generator {
        blocks.extend(p.blocks());
    }
    blocks
}

pub fn model_blocks_mut(model: &mut DivergenceModel) -> Vec<&mut [f64]> {
    let mut blocks = model.encoder.blocks_mut();
    if let ModelGenerator::Icnn(p) = &mut model.generator {
        blocks.extend(p.blocks_mut());
    }
    blocks
}

/// Seeded in-place Fisher-Yates shuffle.
pub(crate) fn shuffle_indices(n: usize, rng: &mut impl rand::Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    idx
}
