//! Minimal structure file readers and writers: a PDB subset for pockets and
//! an XYZ block for ligand poses.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

use super::geometry::{dist2, Vec3};
use super::smiles::is_element;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StructureError {
    #[error("line {line}: {reason}")]
    Pdb { line: usize, reason: String },
    #[error("line {line}: {reason}")]
    Xyz { line: usize, reason: String },
}

/// One ATOM/HETATM row.
#[derive(Debug, Clone, PartialEq)]
pub struct PdbAtom {
    pub hetero: bool,
    pub name: String,
    pub res_name: String,
    pub chain: char,
    pub res_seq: i32,
    pub element: String,
    pub coord: Vec3,
}

impl PdbAtom {
    /// Pocket token: `CA` for alpha carbons, otherwise the element symbol.
    pub fn pocket_token(&self) -> String {
        if self.name == "CA" && self.element == "C" {
            "CA".to_string()
        } else {
            self.element.clone()
        }
    }

    fn is_hydrogen(&self) -> bool {
        self.element == "H" || self.element == "D"
    }

    fn is_water(&self) -> bool {
        matches!(self.res_name.as_str(), "HOH" | "WAT" | "DOD")
    }
}

fn column(line: &str, start: usize, end: usize) -> &str {
    let end = end.min(line.len());
    if start >= end {
        ""
    } else {
        line.get(start..end).unwrap_or("").trim()
    }
}

fn element_case(raw: &str) -> String {
    let mut c = raw.chars();
    match c.next() {
        Some(f) => f.to_ascii_uppercase().to_string() + &c.as_str().to_ascii_lowercase(),
        None => String::new(),
    }
}

/// Reads ATOM/HETATM records from fixed-column PDB text. Other record types
/// are ignored, and parsing stops at the first `END` or `ENDMDL`.
pub fn parse_pdb(text: &str) -> Result<Vec<PdbAtom>, StructureError> {
    let mut atoms = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let rec = column(line, 0, 6);
        if rec == "END" || rec == "ENDMDL" {
            break;
        }
        if rec != "ATOM" && rec != "HETATM" {
            continue;
        }
        let err = |reason: String| StructureError::Pdb { line: line_no, reason };
        let coord = |s, e| {
            column(line, s, e)
                .parse::<f64>()
                .map_err(|_| err(format!("bad coordinate in columns {}-{}", s + 1, e)))
        };
        let name = column(line, 12, 16).to_string();
        if name.is_empty() {
            return Err(err("missing atom name".into()));
        }
        let mut element = element_case(column(line, 76, 78));
        if element.is_empty() {
            // protein atom names start with the element letter
            let first = name.chars().find(|c| c.is_ascii_alphabetic()).unwrap_or(' ');
            element = element_case(&first.to_string());
        }
        if !is_element(&element) && element != "D" {
            return Err(err(format!("unknown element '{element}'")));
        }
        atoms.push(PdbAtom {
            hetero: rec == "HETATM",
            name,
            res_name: column(line, 17, 20).to_string(),
            chain: line.chars().nth(21).unwrap_or(' '),
            res_seq: column(line, 22, 26).parse().unwrap_or(0),
            element,
            coord: [coord(30, 38)?, coord(38, 46)?, coord(46, 54)?],
        });
    }
    Ok(atoms)
}

/// Heavy, non-water atoms as pocket tokens and coordinates.
pub fn pocket_from_atoms(atoms: &[PdbAtom]) -> (Vec<String>, Vec<Vec3>) {
    atoms
        .iter()
        .filter(|a| !a.is_hydrogen() && !a.is_water())
        .map(|a| (a.pocket_token(), a.coord))
        .unzip()
}

/// Keeps whole residues with any heavy atom within `cutoff` Å of a ligand atom.
pub fn extract_pocket(atoms: &[PdbAtom], ligand: &[Vec3], cutoff: f64) -> Vec<PdbAtom> {
    let c2 = cutoff * cutoff;
    let keep: BTreeSet<(char, i32, &str)> = atoms
        .iter()
        .filter(|a| !a.is_hydrogen() && !a.is_water())
        .filter(|a| ligand.iter().any(|l| dist2(a.coord, *l) <= c2))
        .map(|a| (a.chain, a.res_seq, a.res_name.as_str()))
        .collect();
    atoms
        .iter()
        .filter(|a| keep.contains(&(a.chain, a.res_seq, a.res_name.as_str())))
        .cloned()
        .collect()
}

/// A ligand pose: SMILES (comment line) plus per-atom element and position.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub smiles: String,
    pub elements: Vec<String>,
    pub coords: Vec<Vec3>,
}

/// XYZ text: atom count, the SMILES as comment, then `element x y z` rows.
pub fn write_pose(pose: &Pose) -> String {
    let mut s = format!("{}\n{}\n", pose.coords.len(), pose.smiles);
    for (e, p) in pose.elements.iter().zip(&pose.coords) {
        let _ = writeln!(s, "{e} {:.4} {:.4} {:.4}", p[0], p[1], p[2]);
    }
    s
}

pub fn read_pose(text: &str) -> Result<Pose, StructureError> {
    let err = |line: usize, reason: &str| StructureError::Xyz { line, reason: reason.into() };
    let mut lines = text.lines();
    let n: usize = lines
        .next()
        .and_then(|l| l.trim().parse().ok())
        .ok_or_else(|| err(1, "first line must be the atom count"))?;
    let smiles = lines.next().ok_or_else(|| err(2, "missing comment line"))?.trim().to_string();
    let mut elements = Vec::with_capacity(n);
    let mut coords = Vec::with_capacity(n);
    for k in 0..n {
        let line_no = k + 3;
        let line = lines.next().ok_or_else(|| err(line_no, "missing atom row"))?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() < 4 {
            return Err(err(line_no, "expected 'element x y z'"));
        }
        let mut p = [0.0; 3];
        for (slot, v) in p.iter_mut().zip(&f[1..4]) {
            *slot = v.parse().map_err(|_| err(line_no, "bad coordinate"))?;
        }
        elements.push(f[0].to_string());
        coords.push(p);
    }
    Ok(Pose { smiles, elements, coords })
}
