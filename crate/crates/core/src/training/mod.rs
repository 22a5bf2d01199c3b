//! Optimization of the encoder under MSE or preference-conditioned BLF.

mod adamw;
mod fit;
mod schedule;

pub use adamw::AdamW;
pub use fit::{evaluate, finetune_berto, fit, train, Conditioning, Evaluation, TrainOutcome};
pub use schedule::cosine_lr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::losses::LossError;
use crate::model::{ModelError, ModelWeights};
use crate::prompting::PromptError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("non-finite gradient in {tensor}: {value}")]
    NonFiniteGradient { tensor: String, value: f64 },
    /// Training produced a non-finite loss or weights. `last_good` holds the
    /// weights after the last successful step.
    #[error("training diverged at epoch {epoch}, step {step}: {reason}")]
    Diverged {
        epoch: usize,
        step: usize,
        reason: String,
        last_good: Box<ModelWeights>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// Optimizer and schedule settings shared by every training entry point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    /// Stop after this many epochs without a validation improvement.
    /// `0` disables early stopping.
    pub patience: usize,
    /// Global-norm gradient clipping threshold; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub seed: u64,
    /// Set the model's output shift and scale from the training targets
    /// before the first step.
    pub fit_output_scaling: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            base_lr: 1e-5,
            batch_size: 128,
            epochs: 30,
            weight_decay: 0.01,
            patience: 5,
            clip_norm: Some(1.0),
            seed: 0,
            fit_output_scaling: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(TrainError::InvalidConfig(format!(
                "base_lr must be positive, got {}",
                self.base_lr
            )));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig(
                "batch_size must be at least 1".into(),
            ));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(TrainError::InvalidConfig(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(TrainError::InvalidConfig(format!(
                    "clip_norm must be positive, got {c}"
                )));
            }
        }
        Ok(())
    }
}

/// One line of training history. Epoch 0 describes the initial weights and
/// has no training loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: Option<f64>,
    pub eval_mse: f64,
}

/// Line-delimited JSON, one record per epoch.
pub fn history_to_lines(history: &[EpochRecord]) -> String {
    history
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect()
}

pub fn history_from_lines(text: &str) -> Result<Vec<EpochRecord>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
