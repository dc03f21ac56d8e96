//! Losses, optimizer, learning-rate schedule and the training loops.

mod augment;
mod batch;
mod loss;
mod optim;
mod run;
mod schedule;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chem::{RecordError, SmilesError};
use crate::model::ModelError;
use crate::seqcodec::CodecError;

pub use augment::{augment_complex, Augment};
pub use batch::{accumulated_gradient, batch_gradient, gradient_sum, GradSum, Objective};
pub use loss::{docking_loss, docking_loss_grad, pretrain_loss, pretrain_loss_grad, LossBreakdown, LossGrad};
pub use optim::{clip_grad_norm, AdamW};
pub use run::{
    docking_sample, epoch_order, steps_per_epoch, train_docking, train_pretrain, RunFiles, RunOptions, StepLog,
    TrainReport,
    TrainState,
};
pub use schedule::{lr_at_f, Schedule};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Smiles(#[from] SmilesError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("sequence has no next-token targets")]
    NoTargets,
    #[error("sequence has no ligand coordinates to score")]
    NoLigandCoordinates,
    #[error("loss is not finite")]
    NonFiniteLoss,
    #[error("non-finite gradient in {name}[{index}]")]
    NonFiniteGradient { name: String, index: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("step {step}: every sample in the batch failed to prepare")]
    EmptyBatch { step: usize },
    #[error("metrics log: {0}")]
    Io(#[from] std::io::Error),
}

fn default_clip() -> Option<f64> {
    Some(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub micro_batch: usize,
    /// Micro-batches per optimizer step.
    pub accum_steps: usize,
    pub max_lr: f64,
    pub warmup_frac: f64,
    pub total_steps: usize,
    pub weight_decay: f64,
    /// Weight of the coordinate MSE term.
    pub alpha: f64,
    pub seed: u64,
    #[serde(default)]
    pub schedule: Schedule,
    /// Global gradient-norm cap; `None` disables clipping.
    #[serde(default = "default_clip")]
    pub clip_norm: Option<f64>,
    /// Save every this many steps (0: only at the end).
    #[serde(default)]
    pub checkpoint_every: usize,
}

impl TrainConfig {
    /// Large-scale pre-training defaults: 10 240 sequences per step.
    pub fn pretrain_default(total_steps: usize) -> Self {
        TrainConfig {
            micro_batch: 64,
            accum_steps: 160,
            max_lr: 5e-4,
            warmup_frac: 0.01,
            total_steps,
            weight_decay: 0.1,
            alpha: 1.0,
            seed: 0,
            schedule: Schedule::WarmupCosine,
            clip_norm: Some(1.0),
            checkpoint_every: 1000,
        }
    }

    /// Docking fine-tuning defaults: batch 128, max lr 1e-4.
    pub fn docking_default(total_steps: usize) -> Self {
        TrainConfig {
            micro_batch: 32,
            accum_steps: 4,
            max_lr: 1e-4,
            checkpoint_every: 0,
            ..Self::pretrain_default(total_steps)
        }
    }

    pub fn effective_batch(&self) -> usize {
        self.micro_batch * self.accum_steps
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if self.effective_batch() == 0 {
            return bad("micro_batch and accum_steps must be at least 1");
        }
        if !(self.warmup_frac > 0.0 && self.warmup_frac < 1.0) {
            return bad("warmup_frac must lie strictly between 0 and 1");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be a non-negative number");
        }
        if !(self.max_lr >= 0.0 && self.max_lr.is_finite()) {
            return bad("max_lr must be a non-negative number");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be a non-negative number");
        }
        if matches!(self.clip_norm, Some(c) if c.is_nan() || c <= 0.0) {
            return bad("clip_norm must be positive");
        }
        Ok(())
    }
}

/// Learning rate used for the update made at `step` (0-based).
pub fn lr_at(step: usize, cfg: &TrainConfig) -> f64 {
    lr_at_f(step as f64, cfg.max_lr, cfg.warmup_frac, cfg.total_steps, cfg.schedule)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let ok = TrainConfig::pretrain_default(100);
        ok.validate().unwrap();
        assert_eq!(ok.effective_batch(), 10_240);
        for f in [0.0, 1.0, -0.1] {
            let c = TrainConfig { warmup_frac: f, ..ok.clone() };
            assert!(c.validate().is_err());
        }
        assert!(TrainConfig { alpha: -1.0, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { accum_steps: 0, ..ok.clone() }.validate().is_err());
        let json = serde_json::to_string(&ok).unwrap();
        assert_eq!(serde_json::from_str::<TrainConfig>(&json).unwrap(), ok);
        assert!(serde_json::from_str::<TrainConfig>(&json.replace("\"seed\"", "\"sed\"")).is_err());
    }

    #[test]
    fn lr_follows_config() {
        let c = TrainConfig::pretrain_default(1000);
        assert_eq!(lr_at(0, &c), 0.0);
        assert_eq!(lr_at(10, &c), 5e-4);
        assert_eq!(lr_at(1000, &c), 0.0);
        let k = TrainConfig { schedule: Schedule::Constant, max_lr: 1e-4, ..c };
        assert_eq!(lr_at(0, &k), 1e-4);
    }
}
