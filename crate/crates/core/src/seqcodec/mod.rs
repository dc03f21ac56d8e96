//! Vocabulary and the parallel token/number sequence format.

mod encode;
mod io;
mod sequence;
mod vocab;

use thiserror::Error;

use crate::chem::{RecordError, SmilesError};

pub use encode::{
    decode, encode_complex, encode_ligand, encode_ligand_smiles, encode_pocket, encode_record,
    DEFAULT_MAX_LEN,
};
pub use io::{read_sequences, write_sequences};
pub use sequence::{
    layout, validate, Diagnostic, Layout, LigandLayout, ParallelSequence, PocketLayout, Rule,
};
pub use vocab::{is_coord_id, Special, Vocabulary, SMILES_STRUCTURE_TOKENS, SPECIAL_TOKENS};

pub use crate::chem::{tokenize_smiles, TokenizedSmiles};

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("bad vocabulary: {0}")]
    BadVocabulary(String),
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("token '{0}' is not in the vocabulary")]
    OutOfVocabulary(String),
    #[error("{section} has {atoms} atoms but {coords} coordinates")]
    CoordinateCount { section: &'static str, atoms: usize, coords: usize },
    #[error("ligand SMILES has no atoms")]
    NoLigandAtoms,
    #[error("record has neither pocket nor ligand")]
    EmptyRecord,
    #[error("scale factor q must be positive and finite, got {0}")]
    BadScale(f64),
    #[error("sequence length {len} exceeds maximum {max_len}")]
    TooLong { len: usize, max_len: usize },
    #[error("invalid sequence: {}", .0.first().map(|d| d.to_string()).unwrap_or_default())]
    Invalid(Vec<Diagnostic>),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Smiles(#[from] SmilesError),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
