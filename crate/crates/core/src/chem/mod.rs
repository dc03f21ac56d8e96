//! Minimal cheminformatics and geometry: SMILES graphs, coordinate
//! normalization, rotation augmentation, range filtering and RMSD.

mod geometry;
mod record;
mod smiles;
mod structure_io;
mod writer;

pub use geometry::{
    add, centroid, dist2, random_rotation, rmsd, scale, sub, GeometryError, Rotation, Vec3,
};
pub use record::{
    coordinate_range_ok, normalize_complex, read_dataset, write_dataset, Centering, ComplexRecord,
    DatasetRecord, RecordError, DEFAULT_Q, DEFAULT_RANGE_LIMIT,
};
pub use smiles::{
    is_atom_token, is_element, parse_smiles, tokenize_smiles, Atom, Bond, BondOrder, MolGraph, SmilesError,
    TokenizedSmiles,
};
pub use structure_io::{
    extract_pocket, parse_pdb, pocket_from_atoms, read_pose, write_pose, PdbAtom, Pose,
    StructureError,
};
pub use writer::{randomize_smiles, write_smiles, NeighborOrder, WrittenSmiles};

/// Applies `perm` (new position -> old index) to a coordinate list.
pub fn permute<T: Clone>(items: &[T], perm: &[usize]) -> Vec<T> {
    perm.iter().map(|&old| items[old].clone()).collect()
}
