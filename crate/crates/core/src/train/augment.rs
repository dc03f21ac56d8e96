use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::chem::{permute, randomize_smiles, ComplexRecord, Rotation};

/// Docking augmentation switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Augment {
    pub rotate: bool,
    pub randomize_smiles: bool,
}

impl Augment {
    pub const NONE: Augment = Augment { rotate: false, randomize_smiles: false };
    pub const ALL: Augment = Augment { rotate: true, randomize_smiles: true };
}

impl Default for Augment {
    fn default() -> Self {
        Augment::ALL
    }
}

/// Applies a random rotation (about the origin, in Å, before normalization)
/// and a random SMILES rewrite with ligand coordinates permuted to match.
pub fn augment_complex(r: &ComplexRecord, aug: Augment, seed: u64) -> Result<ComplexRecord, TrainError> {
    if r.normalized {
        return Err(TrainError::Config("augmentation expects Ångström coordinates".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = if aug.rotate { r.rotated(&Rotation::random(&mut rng)) } else { r.clone() };
    if aug.randomize_smiles && out.has_ligand() {
        let (smiles, perm) = randomize_smiles(&out.ligand_smiles, rng.random())?;
        if perm.len() != out.ligand_coords.len() {
            return Err(TrainError::Shape("ligand coordinates do not match the SMILES atoms".into()));
        }
        out.ligand_coords = permute(&out.ligand_coords, &perm);
        out.ligand_smiles = smiles;
    }
    Ok(out)
}
