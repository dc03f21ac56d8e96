//! Reward-driven fine-tuning of the token channel for pocket-aware design.

mod oracle;
mod rewards;
mod rl;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chem::SmilesError;
use crate::model::ModelError;
use crate::seqcodec::CodecError;
use crate::train::TrainError;

pub use oracle::{
    format_request, format_response, mock_scores, parse_request, parse_response, CommandOracle, MockOracle,
    Oracle, OracleRequest, OracleScores,
};
pub use rewards::{
    is_success, reward_dock, reward_qed, reward_sa, reward_total, rl_loss, DEFAULT_SIGMA, QED_THRESHOLD,
    SA_THRESHOLD, VINA_SUCCESS,
};
pub use rl::{
    dedup_key, design_prompt, rl_gradient, rl_run, rl_step, sample_batch, score_batch, Archive, ArchiveEntry,
    DesignCandidate, DesignPrompt, RlReport, RlState, RlStepLog,
};

#[derive(Debug, Error)]
pub enum DesignError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Smiles(#[from] SmilesError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("oracle response line {line}: {reason}")]
    Protocol { line: usize, reason: String },
    #[error("oracle failed: {0}")]
    Oracle(String),
    #[error("{what} = {value} is out of range")]
    OutOfRange { what: &'static str, value: f64 },
    #[error("invalid design config: {0}")]
    Config(String),
    #[error("frozen docking weights changed during the run")]
    FrozenWeightsChanged,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RLConfig {
    pub sigma: f64,
    pub steps: usize,
    pub batch: usize,
    /// Constant learning rate.
    pub lr: f64,
    pub temperature: f64,
    pub max_smiles_tokens: usize,
    pub seed: u64,
    /// Size of the final unique selection.
    pub top_k: usize,
}

impl Default for RLConfig {
    fn default() -> Self {
        RLConfig {
            sigma: DEFAULT_SIGMA,
            steps: 500,
            batch: 128,
            lr: 1e-4,
            temperature: 1.0,
            max_smiles_tokens: 100,
            seed: 0,
            top_k: 100,
        }
    }
}

impl RLConfig {
    pub fn validate(&self) -> Result<(), DesignError> {
        let bad = |m: &str| Err(DesignError::Config(m.into()));
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be positive");
        }
        if self.batch == 0 {
            return bad("batch must be at least 1");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be a non-negative number");
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be a non-negative number");
        }
        if self.max_smiles_tokens == 0 {
            return bad("max_smiles_tokens must be at least 1");
        }
        Ok(())
    }
}
