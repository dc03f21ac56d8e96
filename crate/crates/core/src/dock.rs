//! Docking inference: pocket plus SMILES in, ligand coordinates out.

use thiserror::Error;

use crate::chem::{add, centroid, parse_smiles, scale, sub, Pose, SmilesError, Vec3};
use crate::model::{generate_coordinates, ModelError, Weights};
use crate::seqcodec::{encode_pocket, tokenize_smiles, CodecError, ParallelSequence, Special, Vocabulary};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum DockError {
    #[error("docking needs at least one pocket atom")]
    NoPocket,
    #[error("SMILES token {position} ('{token}') is not in the vocabulary")]
    UnknownToken { position: usize, token: String },
    #[error(transparent)]
    Smiles(#[from] SmilesError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Prompt for coordinate generation and the frame it lives in.
#[derive(Debug, Clone, PartialEq)]
pub struct DockPrompt {
    /// `[PS] .. [PCE] [LS] smiles [LE]`.
    pub seq: ParallelSequence,
    pub center: Vec3,
    pub q: f64,
    pub atom_count: usize,
    pub elements: Vec<String>,
}

/// Centres the pocket on its centroid, scales by `q` and appends the SMILES.
pub fn dock_prompt(
    vocab: &Vocabulary,
    pocket_atoms: &[String],
    pocket_coords: &[Vec3],
    smiles: &str,
    q: f64,
) -> Result<DockPrompt, DockError> {
    let center = centroid(pocket_coords).ok_or(DockError::NoPocket)?;
    let shifted: Vec<Vec3> = pocket_coords.iter().map(|&p| sub(p, center)).collect();
    let mut seq = encode_pocket(vocab, pocket_atoms, &shifted, q)?;
    let tok = tokenize_smiles(smiles)?;
    let graph = parse_smiles(smiles)?;
    seq.push_special(Special::LigandStart);
    for (position, t) in tok.tokens.iter().enumerate() {
        match vocab.id(t) {
            Some(id) if !vocab.is_special(id) => seq.push_token(id),
            _ => return Err(DockError::UnknownToken { position, token: t.clone() }),
        }
    }
    seq.push_special(Special::LigandEnd);
    Ok(DockPrompt {
        seq,
        center,
        q,
        atom_count: graph.atoms.len(),
        elements: graph.atoms.iter().map(|a| a.element.clone()).collect(),
    })
}

/// Maps generated coordinates of the last `atom_count` triplets back to Å.
pub fn ligand_coords_from(seq: &ParallelSequence, prompt: &DockPrompt) -> Vec<Vec3> {
    let start = prompt.seq.len() + 1;
    seq.numbers[start..start + 3 * prompt.atom_count]
        .chunks_exact(3)
        .map(|c| add(scale([c[0], c[1], c[2]], prompt.q), prompt.center))
        .collect()
}

/// Predicts a ligand pose in numerical mode. Deterministic.
pub fn dock<T: Scalar>(
    w: &Weights<T>,
    vocab: &Vocabulary,
    pocket_atoms: &[String],
    pocket_coords: &[Vec3],
    smiles: &str,
    q: f64,
) -> Result<Pose, DockError> {
    let prompt = dock_prompt(vocab, pocket_atoms, pocket_coords, smiles, q)?;
    let seq = generate_coordinates(w, &prompt.seq, prompt.atom_count)?;
    Ok(Pose { smiles: smiles.to_string(), elements: prompt.elements.clone(), coords: ligand_coords_from(&seq, &prompt) })
}
