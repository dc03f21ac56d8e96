//! Dual-channel decoder-only transformer: fused token×number input, a token
//! head and a number head, with token-mode and numerical-mode decoding.

mod checkpoint;
mod config;
mod forward;
mod generate;
pub(crate) mod ops;
mod weights;

use thiserror::Error;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::ModelConfig;
pub use forward::{ForwardOutput, Session};
pub use generate::{
    generate_coordinates, generate_tokens, log_likelihood, sample_index, Generated,
};
pub use ops::{log_prob, softmax};
pub use weights::{BlockOffsets, Layout, TensorInfo, Weights};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    BadConfig(String),
    #[error("sequence length {len} exceeds max_len {max_len}")]
    TooLong { len: usize, max_len: usize },
    #[error("position {position}: token id {id} is outside the vocabulary")]
    UnknownToken { position: usize, id: u32 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid span {start}..{end} for a sequence of length {len}")]
    BadSpan { start: usize, end: usize, len: usize },
    #[error("temperature must be finite and non-negative, got {0}")]
    BadTemperature(f64),
    #[error("atom count must be positive")]
    NoAtoms,
    #[error("prefix must end with the ligand end token")]
    BadPrefix,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("vocabulary hash mismatch: checkpoint {found}, expected {expected}")]
    VocabMismatch { expected: String, found: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
