//! Synthetic complexes shared by the integration tests.
#![allow(dead_code)]

use pockformer_core::chem::{parse_smiles, ComplexRecord, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const POCKET_TOKENS: [&str; 5] = ["N", "CA", "C", "O", "S"];

pub const LIGANDS: [&str; 12] = [
    "CCO",
    "CC(=O)N",
    "c1ccccc1O",
    "CCN(C)C",
    "OCC(O)CO",
    "c1ccncc1",
    "CC(C)Cc1ccccc1",
    "NCCS",
    "O=C(O)c1ccccc1",
    "C1CCNCC1",
    "CC#N",
    "COc1ccc(N)cc1",
];

fn unit<R: Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let n2: f64 = v.iter().map(|x| x * x).sum();
        if n2 > 1e-3 && n2 <= 1.0 {
            let n = n2.sqrt();
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Random walk with 1.5 Å steps, one point per atom.
pub fn chain_coords<R: Rng>(rng: &mut R, n: usize, start: Vec3) -> Vec<Vec3> {
    let mut out = vec![start];
    while out.len() < n {
        let d = unit(rng);
        let p = *out.last().unwrap();
        out.push([p[0] + 1.5 * d[0], p[1] + 1.5 * d[1], p[2] + 1.5 * d[2]]);
    }
    out
}

/// A pocket of `n_pocket` atoms scattered in a 12 Å box around a random
/// centre, with `smiles` placed near that centre.
pub fn complex<R: Rng>(rng: &mut R, n_pocket: usize, smiles: &str) -> ComplexRecord {
    let c = [rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0)];
    let atoms = (0..n_pocket).map(|_| POCKET_TOKENS[rng.random_range(0..POCKET_TOKENS.len())].to_string()).collect();
    let coords = (0..n_pocket)
        .map(|_| [c[0] + rng.random_range(-6.0..6.0), c[1] + rng.random_range(-6.0..6.0), c[2] + rng.random_range(-6.0..6.0)])
        .collect();
    let n_lig = parse_smiles(smiles).unwrap().atoms.len();
    let start = [c[0] + rng.random_range(-1.0..1.0), c[1], c[2]];
    let lig = chain_coords(rng, n_lig, start);
    ComplexRecord::new(atoms, coords, smiles, lig)
}

pub fn complexes(seed: u64, n: usize, n_pocket: usize) -> Vec<ComplexRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|k| complex(&mut rng, n_pocket, LIGANDS[k % LIGANDS.len()])).collect()
}

/// Linear chains of C, N and O (mostly carbon) with an occasional methyl
/// branch.
pub fn synthetic_smiles<R: Rng>(rng: &mut R) -> String {
    let n = rng.random_range(5..12);
    let mut s = String::new();
    for k in 0..n {
        let u: f64 = rng.random();
        s.push_str(if u < 0.6 { "C" } else if u < 0.8 { "N" } else { "O" });
        if k > 0 && k + 1 < n && rng.random::<f64>() < 0.15 {
            s.push_str("(C)");
        }
    }
    s
}

/// Complexes pairing random pockets with synthetic ligands.
pub fn synthetic_corpus(seed: u64, n: usize, n_pocket: usize) -> Vec<ComplexRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let s = synthetic_smiles(&mut rng);
            complex(&mut rng, n_pocket, &s)
        })
        .collect()
}
