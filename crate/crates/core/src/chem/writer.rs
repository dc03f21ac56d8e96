//! SMILES serialization by depth-first traversal, and SMILES randomization.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::smiles::{parse_smiles, BondOrder, MolGraph, SmilesError};

/// How neighbours are ordered while walking the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeighborOrder {
    /// Ascending atom index.
    Default,
    /// Uniformly shuffled per atom from a seeded generator.
    Shuffled(u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WrittenSmiles {
    pub smiles: String,
    /// `atom_order[k]` is the graph index of the k-th atom in `smiles`.
    pub atom_order: Vec<usize>,
}

fn bond_symbol(order: BondOrder, a_arom: bool, b_arom: bool) -> &'static str {
    match order {
        BondOrder::Single if a_arom && b_arom => "-",
        BondOrder::Single => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
        BondOrder::Aromatic if a_arom && b_arom => "",
        BondOrder::Aromatic => ":",
    }
}

fn ring_label(d: u32) -> String {
    if d < 10 {
        d.to_string()
    } else {
        format!("%{d:02}")
    }
}

struct Walk {
    order: Vec<usize>,
    children: Vec<Vec<(usize, usize)>>,
    /// Ring bonds per atom, in the order they were found.
    ring_bonds: Vec<Vec<usize>>,
}

fn walk(g: &MolGraph, start: usize, rng: &mut Option<ChaCha8Rng>) -> Walk {
    let n = g.atoms.len();
    let mut adj = g.adjacency();
    let mut visited = vec![false; n];
    let mut ring_seen = vec![false; g.bonds.len()];
    let mut w = Walk {
        order: Vec::with_capacity(n),
        children: vec![Vec::new(); n],
        ring_bonds: vec![Vec::new(); n],
    };
    // (atom, parent bond, next neighbour cursor)
    let mut stack: Vec<(usize, Option<usize>, usize)> = Vec::new();
    visited[start] = true;
    w.order.push(start);
    if let Some(r) = rng.as_mut() {
        adj[start].shuffle(r);
    }
    stack.push((start, None, 0));
    while let Some(top) = stack.last_mut() {
        let (v, parent, cursor) = *top;
        if cursor == adj[v].len() {
            stack.pop();
            continue;
        }
        top.2 += 1;
        let (u, b) = adj[v][cursor];
        if Some(b) == parent {
            continue;
        }
        if visited[u] {
            if !ring_seen[b] {
                ring_seen[b] = true;
                w.ring_bonds[u].push(b);
                w.ring_bonds[v].push(b);
            }
            continue;
        }
        visited[u] = true;
        w.order.push(u);
        w.children[v].push((u, b));
        if let Some(r) = rng.as_mut() {
            adj[u].shuffle(r);
        }
        stack.push((u, Some(b), 0));
    }
    w
}

/// Writes `g` as SMILES starting from `start`.
pub fn write_smiles(
    g: &MolGraph,
    start: usize,
    order: NeighborOrder,
) -> Result<WrittenSmiles, SmilesError> {
    if start >= g.atoms.len() {
        return Err(SmilesError::AtomOutOfRange(start));
    }
    if !g.is_connected() {
        return Err(SmilesError::Disconnected);
    }
    let mut rng = match order {
        NeighborOrder::Default => None,
        NeighborOrder::Shuffled(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
    };
    let w = walk(g, start, &mut rng);
    Ok(emit(g, &w, start))
}

fn emit(g: &MolGraph, w: &Walk, start: usize) -> WrittenSmiles {
    let mut rank = vec![0usize; g.atoms.len()];
    for (k, &a) in w.order.iter().enumerate() {
        rank[a] = k;
    }
    let mut out = String::new();
    let mut digit_of = vec![0u32; g.bonds.len()];
    let mut in_use: Vec<bool> = vec![false];

    enum Item {
        Atom(usize, Option<usize>),
        Open,
        Close,
    }
    let mut stack = vec![Item::Atom(start, None)];
    while let Some(item) = stack.pop() {
        let (v, incoming) = match item {
            Item::Open => {
                out.push('(');
                continue;
            }
            Item::Close => {
                out.push(')');
                continue;
            }
            Item::Atom(v, incoming) => (v, incoming),
        };
        if let Some(b) = incoming {
            let bond = &g.bonds[b];
            let other = bond.other(v);
            out.push_str(bond_symbol(bond.order, g.atoms[other].aromatic, g.atoms[v].aromatic));
        }
        out.push_str(&g.atoms[v].smiles_text());

        let mut freed = Vec::new();
        for &b in &w.ring_bonds[v] {
            let bond = &g.bonds[b];
            let other = bond.other(v);
            if rank[other] < rank[v] {
                let d = digit_of[b];
                out.push_str(&ring_label(d));
                freed.push(d);
            } else {
                let d = (1..).find(|&d| !in_use.get(d as usize).copied().unwrap_or(false)).unwrap();
                if in_use.len() <= d as usize {
                    in_use.resize(d as usize + 1, false);
                }
                in_use[d as usize] = true;
                digit_of[b] = d;
                out.push_str(bond_symbol(bond.order, g.atoms[v].aromatic, g.atoms[other].aromatic));
                out.push_str(&ring_label(d));
            }
        }
        for d in freed {
            in_use[d as usize] = false;
        }

        let kids = &w.children[v];
        for (k, &(u, b)) in kids.iter().enumerate().rev() {
            let branch = k + 1 < kids.len();
            if branch {
                stack.push(Item::Close);
            }
            stack.push(Item::Atom(u, Some(b)));
            if branch {
                stack.push(Item::Open);
            }
        }
    }
    WrittenSmiles { smiles: out, atom_order: w.order.clone() }
}

/// Rewrites `smiles` from a random start atom with random neighbour order.
///
/// Returns the new string and `perm` with `perm[new] = old` atom index, so
/// ligand coordinates can be reordered as `new_coords[k] = coords[perm[k]]`.
pub fn randomize_smiles(smiles: &str, seed: u64) -> Result<(String, Vec<usize>), SmilesError> {
    let g = parse_smiles(smiles)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.random_range(0..g.atoms.len());
    let w = write_smiles(&g, start, NeighborOrder::Shuffled(rng.random()))?;
    Ok((w.smiles, w.atom_order))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// True if `perm` (new -> old) maps `new` onto `old` atom for atom and bond for bond.
    fn is_isomorphism(old: &MolGraph, new: &MolGraph, perm: &[usize]) -> bool {
        if old.atoms.len() != new.atoms.len() || old.bonds.len() != new.bonds.len() {
            return false;
        }
        let atoms_match = new.atoms.iter().enumerate().all(|(k, a)| {
            let o = &old.atoms[perm[k]];
            a.element == o.element && a.aromatic == o.aromatic && a.charge == o.charge
        });
        atoms_match
            && new.bonds.iter().all(|b| {
                old.bond_between(perm[b.a], perm[b.b]).is_some_and(|ob| ob.order == b.order)
            })
    }

    #[test]
    fn writes_from_chosen_start() {
        let g = parse_smiles("CCO").unwrap();
        let w = write_smiles(&g, 2, NeighborOrder::Default).unwrap();
        assert_eq!(w.smiles, "OCC");
        assert_eq!(w.atom_order, [2, 1, 0]);
        assert_eq!(write_smiles(&g, 0, NeighborOrder::Default).unwrap().smiles, "CCO");
        assert!(matches!(write_smiles(&g, 3, NeighborOrder::Default), Err(SmilesError::AtomOutOfRange(3))));
    }

    #[test]
    fn default_order_reproduces_simple_input() {
        for s in ["CC(=O)N", "c1ccccc1", "C1CC1C#N", "CCCC(C(=O)Nc1ccc(S(N)(=O)=O)cc1)C(C)(C)C"] {
            let g = parse_smiles(s).unwrap();
            assert_eq!(write_smiles(&g, 0, NeighborOrder::Default).unwrap().smiles, s);
        }
    }

    #[test]
    fn randomized_smiles_is_same_molecule() {
        let src = "CCCC(C(=O)Nc1ccc(S(N)(=O)=O)cc1)C(C)(C)C";
        let g = parse_smiles(src).unwrap();
        let mut distinct = std::collections::HashSet::new();
        for seed in 0..50 {
            let (s, perm) = randomize_smiles(src, seed).unwrap();
            let h = parse_smiles(&s).unwrap();
            assert!(is_isomorphism(&g, &h, &perm), "{s}");
            let mut sorted = perm.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (0..g.atoms.len()).collect::<Vec<_>>());
            distinct.insert(s);
        }
        assert!(distinct.len() > 10);
        assert_eq!(randomize_smiles(src, 7).unwrap(), randomize_smiles(src, 7).unwrap());
    }

    #[test]
    fn fused_rings_and_charges_survive() {
        for src in ["c1ccc2ccccc2c1", "C1CC2CCC1CC2", "[NH3+]CC(=O)[O-]", "c1cc[nH]c1", "c1ccccc1-c1ccccc1"] {
            let g = parse_smiles(src).unwrap();
            for seed in 0..20 {
                let (s, perm) = randomize_smiles(src, seed).unwrap();
                let h = parse_smiles(&s).unwrap();
                assert!(is_isomorphism(&g, &h, &perm), "{src} -> {s}");
            }
        }
    }

    #[test]
    fn many_rings_use_percent_labels() {
        // eleven rings open at once on a fully connected star of small rings
        let mut g = parse_smiles("C").unwrap();
        let hub = 0;
        let first = g.atoms[0].clone();
        for _ in 0..11 {
            let a = g.atoms.len();
            g.atoms.push(first.clone());
            g.atoms.push(first.clone());
            g.bonds.push(super::super::smiles::Bond { a: hub, b: a, order: BondOrder::Single });
            g.bonds.push(super::super::smiles::Bond { a, b: a + 1, order: BondOrder::Single });
            g.bonds.push(super::super::smiles::Bond { a: a + 1, b: hub, order: BondOrder::Single });
        }
        g.source_order = (0..g.atoms.len()).collect();
        let w = write_smiles(&g, 0, NeighborOrder::Default).unwrap();
        let h = parse_smiles(&w.smiles).unwrap();
        assert!(is_isomorphism(&g, &h, &w.atom_order), "{}", w.smiles);
    }
}
