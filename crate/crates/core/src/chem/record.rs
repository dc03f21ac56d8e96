//! Pocket-ligand complex records and the dataset JSON Lines format.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::geometry::{add, centroid, scale, sub, Rotation, Vec3};
use super::smiles::{tokenize_smiles, SmilesError};

/// Default coordinate scale factor.
pub const DEFAULT_Q: f64 = 5.0;
/// Default per-axis coordinate range limit in Å.
pub const DEFAULT_RANGE_LIMIT: f64 = 40.0;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("record has no atoms")]
    NoAtoms,
    #[error("record is already normalized")]
    AlreadyNormalized,
    #[error("scale factor q must be positive and finite, got {0}")]
    BadScale(f64),
    #[error("pocket has {atoms} atoms but {coords} coordinates")]
    PocketMismatch { atoms: usize, coords: usize },
    #[error("ligand has {atoms} atoms but {coords} coordinates")]
    LigandMismatch { atoms: usize, coords: usize },
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("ligand SMILES: {0}")]
    Smiles(#[from] SmilesError),
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which atoms define the origin during normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    /// Mean over all pocket and ligand atoms.
    #[default]
    Joint,
    /// Mean over pocket atoms only (ligand position unknown at docking time).
    Pocket,
}

/// On-disk dataset row: Ångström coordinates, never normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    #[serde(default)]
    pub pocket_atoms: Vec<String>,
    #[serde(default)]
    pub pocket_coords: Vec<Vec3>,
    #[serde(default)]
    pub ligand_smiles: String,
    #[serde(default)]
    pub ligand_coords: Vec<Vec3>,
}

/// A pocket paired with a ligand. Either side may be empty for pocket-only
/// or ligand-only pre-training samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexRecord {
    pub pocket_atoms: Vec<String>,
    pub pocket_coords: Vec<Vec3>,
    pub ligand_smiles: String,
    /// In SMILES atom order.
    pub ligand_coords: Vec<Vec3>,
    pub normalized: bool,
    pub q: f64,
    pub center: Vec3,
}

impl From<DatasetRecord> for ComplexRecord {
    fn from(r: DatasetRecord) -> Self {
        ComplexRecord {
            pocket_atoms: r.pocket_atoms,
            pocket_coords: r.pocket_coords,
            ligand_smiles: r.ligand_smiles,
            ligand_coords: r.ligand_coords,
            normalized: false,
            q: 1.0,
            center: [0.0; 3],
        }
    }
}

impl ComplexRecord {
    pub fn new(
        pocket_atoms: Vec<String>,
        pocket_coords: Vec<Vec3>,
        ligand_smiles: impl Into<String>,
        ligand_coords: Vec<Vec3>,
    ) -> Self {
        DatasetRecord {
            pocket_atoms,
            pocket_coords,
            ligand_smiles: ligand_smiles.into(),
            ligand_coords,
        }
        .into()
    }

    /// Back to Ångström wire form (de-normalizing first if needed).
    pub fn to_dataset(&self) -> DatasetRecord {
        let r = if self.normalized { self.denormalized() } else { self.clone() };
        DatasetRecord {
            pocket_atoms: r.pocket_atoms,
            pocket_coords: r.pocket_coords,
            ligand_smiles: r.ligand_smiles,
            ligand_coords: r.ligand_coords,
        }
    }

    pub fn has_pocket(&self) -> bool {
        !self.pocket_atoms.is_empty()
    }

    pub fn has_ligand(&self) -> bool {
        !self.ligand_smiles.is_empty()
    }

    pub fn all_coords(&self) -> impl Iterator<Item = &Vec3> {
        self.pocket_coords.iter().chain(&self.ligand_coords)
    }

    /// Structural checks: coordinate counts and finiteness.
    pub fn check(&self) -> Result<(), RecordError> {
        if self.pocket_atoms.len() != self.pocket_coords.len() {
            return Err(RecordError::PocketMismatch {
                atoms: self.pocket_atoms.len(),
                coords: self.pocket_coords.len(),
            });
        }
        let atoms = if self.ligand_smiles.is_empty() {
            0
        } else {
            tokenize_smiles(&self.ligand_smiles)?.atom_count
        };
        if atoms != self.ligand_coords.len() {
            return Err(RecordError::LigandMismatch { atoms, coords: self.ligand_coords.len() });
        }
        if self.all_coords().flatten().any(|c| !c.is_finite()) {
            return Err(RecordError::NonFinite);
        }
        Ok(())
    }

    pub fn map_coords(&self, f: impl Fn(Vec3) -> Vec3) -> ComplexRecord {
        ComplexRecord {
            pocket_coords: self.pocket_coords.iter().map(|p| f(*p)).collect(),
            ligand_coords: self.ligand_coords.iter().map(|p| f(*p)).collect(),
            ..self.clone()
        }
    }

    /// Inverse of [`normalize_complex`]: `coords * q + center`.
    pub fn denormalized(&self) -> ComplexRecord {
        if !self.normalized {
            return self.clone();
        }
        let (q, c) = (self.q, self.center);
        let mut r = self.map_coords(|p| add(scale(p, q), c));
        r.normalized = false;
        r.q = 1.0;
        r.center = [0.0; 3];
        r
    }

    /// Rotates every coordinate about the origin.
    pub fn rotated(&self, rot: &Rotation) -> ComplexRecord {
        self.map_coords(|p| rot.apply(p))
    }
}

/// Translates the centering atoms' mean to the origin and divides by `q`.
pub fn normalize_complex(
    r: &ComplexRecord,
    q: f64,
    centering: Centering,
) -> Result<ComplexRecord, RecordError> {
    if r.normalized {
        return Err(RecordError::AlreadyNormalized);
    }
    if !(q > 0.0 && q.is_finite()) {
        return Err(RecordError::BadScale(q));
    }
    let center = match centering {
        Centering::Joint => centroid(r.all_coords()),
        Centering::Pocket => centroid(&r.pocket_coords).or_else(|| centroid(r.all_coords())),
    }
    .ok_or(RecordError::NoAtoms)?;
    let mut out = r.map_coords(|p| scale(sub(p, center), 1.0 / q));
    out.normalized = true;
    out.q = q;
    out.center = center;
    Ok(out)
}

/// True when every axis spans at most `limit` over all atoms (inclusive).
pub fn coordinate_range_ok(r: &ComplexRecord, limit: f64) -> bool {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in r.all_coords() {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (0..3).all(|k| hi[k] < lo[k] || hi[k] - lo[k] <= limit)
}

pub fn read_dataset(reader: impl BufRead) -> Result<Vec<ComplexRecord>, RecordError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DatasetRecord =
            serde_json::from_str(&line).map_err(|source| RecordError::Json { line: i + 1, source })?;
        out.push(rec.into());
    }
    Ok(out)
}

pub fn write_dataset<'a>(
    mut writer: impl Write,
    records: impl IntoIterator<Item = &'a ComplexRecord>,
) -> Result<(), RecordError> {
    for r in records {
        let line = serde_json::to_string(&r.to_dataset())
            .map_err(|source| RecordError::Json { line: 0, source })?;
        writeln!(writer, "{line}")?;
    }
    Ok(())
}
