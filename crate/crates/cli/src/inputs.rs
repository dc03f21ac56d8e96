use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;

use anyhow::Context;
use pockformer_core::chem::{
    coordinate_range_ok, parse_pdb, pocket_from_atoms, read_dataset, ComplexRecord, Vec3,
};
use pockformer_core::seqcodec::Vocabulary;

use crate::error::{invalid, Result};

pub fn read_records(path: &Path) -> Result<Vec<ComplexRecord>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let recs = read_dataset(BufReader::new(f)).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    for (i, r) in recs.iter().enumerate() {
        r.check().map_err(|e| invalid(format!("{}: record {}: {e}", path.display(), i + 1)))?;
    }
    Ok(recs)
}

pub fn read_all(paths: &[impl AsRef<Path>]) -> Result<Vec<ComplexRecord>> {
    let mut out = Vec::new();
    for p in paths {
        out.extend(read_records(p.as_ref())?);
    }
    Ok(out)
}

/// Drops records whose coordinates span more than `limit` Å on any axis.
pub fn range_filter(records: Vec<ComplexRecord>, limit: f64) -> Vec<ComplexRecord> {
    let n = records.len();
    let kept: Vec<_> = records.into_iter().filter(|r| coordinate_range_ok(r, limit)).collect();
    if kept.len() < n {
        log::info!("range filter: dropped {} of {n} records wider than {limit} A", n - kept.len());
    }
    kept
}

pub fn read_vocab(path: &Path) -> Result<Vocabulary> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Vocabulary::from_json(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

pub fn is_dataset(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "jsonl")
}

/// Pocket atoms from a PDB file, or from record `index` of a dataset file
/// together with that record.
pub struct Pocket {
    pub atoms: Vec<String>,
    pub coords: Vec<Vec3>,
    pub record: Option<ComplexRecord>,
}

pub fn read_pocket(path: &Path, index: usize) -> Result<Pocket> {
    if is_dataset(path) {
        let mut recs = read_records(path)?;
        if index >= recs.len() {
            return Err(invalid(format!("{} has {} records, no record {index}", path.display(), recs.len())));
        }
        let r = recs.swap_remove(index);
        return Ok(Pocket { atoms: r.pocket_atoms.clone(), coords: r.pocket_coords.clone(), record: Some(r) });
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let atoms = parse_pdb(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let (atoms, coords) = pocket_from_atoms(&atoms);
    if atoms.is_empty() {
        return Err(invalid(format!("{}: no pocket atoms", path.display())));
    }
    Ok(Pocket { atoms, coords, record: None })
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}
