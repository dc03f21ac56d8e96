//! Atom-level SMILES tokenization and parsing into a heavy-atom graph.
//!
//! Supported subset: organic-subset atoms (B C N O P S F Cl Br I), aromatic
//! atoms (b c n o p s), bracket atoms with optional H count and charge,
//! bonds `- = # :`, branches and ring closures (`1`-`9`, `%nn`). Stereo
//! markers, isotopes, atom classes, explicit hydrogens and `.` are rejected.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmilesError {
    #[error("empty SMILES")]
    Empty,
    #[error("unsupported character '{ch}' at position {pos}")]
    UnsupportedChar { pos: usize, ch: char },
    #[error("stereochemistry marker '{ch}' at position {pos} is not supported")]
    Stereo { pos: usize, ch: char },
    #[error("bad bracket atom at position {pos}: {reason}")]
    BadBracket { pos: usize, reason: String },
    #[error("unmatched '(' at position {pos}")]
    UnclosedBranch { pos: usize },
    #[error("unmatched ')' at position {pos}")]
    UnmatchedClose { pos: usize },
    #[error("ring closure {label} opened at position {pos} is never closed")]
    DanglingRing { pos: usize, label: u32 },
    #[error("bond symbol at position {pos} is not followed by an atom or ring closure")]
    MisplacedBond { pos: usize },
    #[error("'{token}' at position {pos} has no preceding atom")]
    MissingAtom { pos: usize, token: String },
    #[error("ring closure {label} at position {pos} has conflicting bond symbols")]
    RingBondConflict { pos: usize, label: u32 },
    #[error("ring closure {label} at position {pos} would create a self or duplicate bond")]
    InvalidRingBond { pos: usize, label: u32 },
    #[error("molecular graph is not connected")]
    Disconnected,
    #[error("atom index {0} out of range")]
    AtomOutOfRange(usize),
}

/// Atom-level token list of a SMILES string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedSmiles {
    pub tokens: Vec<String>,
    /// `true` where the token carries an atom.
    pub atom_mask: Vec<bool>,
    pub atom_count: usize,
}

impl TokenizedSmiles {
    /// Byte offset of every token in the source string.
    pub fn offsets(&self) -> Vec<usize> {
        let mut pos = 0;
        self.tokens
            .iter()
            .map(|t| {
                let p = pos;
                pos += t.len();
                p
            })
            .collect()
    }
}

const ELEMENTS: &[&str] = &[
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl",
    "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In",
    "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb",
    "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl",
    "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U",
];

const AROMATIC_BRACKET: &[&str] = &["se", "as", "b", "c", "n", "o", "p", "s"];

pub fn is_element(sym: &str) -> bool {
    ELEMENTS.contains(&sym)
}

/// True if a token string (as produced by [`tokenize_smiles`]) carries an atom.
pub fn is_atom_token(token: &str) -> bool {
    match token.as_bytes().first() {
        Some(b'[') => true,
        Some(c) => c.is_ascii_alphabetic(),
        None => false,
    }
}

pub fn tokenize_smiles(smiles: &str) -> Result<TokenizedSmiles, SmilesError> {
    let bytes = smiles.as_bytes();
    let mut tokens = Vec::new();
    let mut atom_mask = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let (len, is_atom) = match c {
            b'B' if bytes.get(i + 1) == Some(&b'r') => (2, true),
            b'C' if bytes.get(i + 1) == Some(&b'l') => (2, true),
            b'B' | b'C' | b'N' | b'O' | b'P' | b'S' | b'F' | b'I' => (1, true),
            b'b' | b'c' | b'n' | b'o' | b'p' | b's' => (1, true),
            b'[' => {
                let close = smiles[i..].find(']').ok_or(SmilesError::BadBracket {
                    pos: i,
                    reason: "missing ']'".into(),
                })?;
                parse_bracket(&smiles[i..=i + close], i)?;
                (close + 1, true)
            }
            b'0'..=b'9' => (1, false),
            b'%' => {
                let ok = bytes.len() >= i + 3
                    && bytes[i + 1].is_ascii_digit()
                    && bytes[i + 2].is_ascii_digit();
                if !ok {
                    return Err(SmilesError::UnsupportedChar { pos: i, ch: '%' });
                }
                (3, false)
            }
            b'-' | b'=' | b'#' | b':' | b'(' | b')' => (1, false),
            b'/' | b'\\' | b'@' => {
                return Err(SmilesError::Stereo { pos: i, ch: c as char });
            }
            _ => {
                let ch = smiles[i..].chars().next().unwrap_or('?');
                return Err(SmilesError::UnsupportedChar { pos: i, ch });
            }
        };
        tokens.push(smiles[i..i + len].to_string());
        atom_mask.push(is_atom);
        i += len;
    }
    let atom_count = atom_mask.iter().filter(|&&a| a).count();
    Ok(TokenizedSmiles { tokens, atom_mask, atom_count })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    /// Element symbol in canonical case ("C", "Cl", "Se").
    pub element: String,
    pub aromatic: bool,
    pub charge: i8,
    /// Explicit hydrogen count; only bracket atoms carry one.
    pub hydrogens: Option<u8>,
    pub bracketed: bool,
}

impl Atom {
    fn organic(symbol: &str) -> Atom {
        let aromatic = symbol.chars().next().is_some_and(|c| c.is_ascii_lowercase());
        Atom {
            element: canonical_element(symbol),
            aromatic,
            charge: 0,
            hydrogens: None,
            bracketed: false,
        }
    }

    /// SMILES text of the atom.
    pub fn smiles_text(&self) -> String {
        let sym = if self.aromatic {
            self.element.to_ascii_lowercase()
        } else {
            self.element.clone()
        };
        if !self.bracketed {
            return sym;
        }
        let mut s = format!("[{sym}");
        match self.hydrogens {
            Some(0) | None => {}
            Some(1) => s.push('H'),
            Some(n) => s.push_str(&format!("H{n}")),
        }
        match self.charge {
            0 => {}
            1 => s.push('+'),
            -1 => s.push('-'),
            c if c > 0 => s.push_str(&format!("+{c}")),
            c => s.push_str(&format!("-{}", -c)),
        }
        s.push(']');
        s
    }
}

fn canonical_element(sym: &str) -> String {
    let mut chars = sym.chars();
    match chars.next() {
        Some(first) => first.to_ascii_uppercase().to_string() + chars.as_str(),
        None => String::new(),
    }
}

fn parse_bracket(token: &str, pos: usize) -> Result<Atom, SmilesError> {
    let bad = |reason: &str| SmilesError::BadBracket { pos, reason: reason.into() };
    let inner = &token[1..token.len() - 1];
    let b = inner.as_bytes();
    if b.is_empty() {
        return Err(bad("empty brackets"));
    }
    if b[0].is_ascii_digit() {
        return Err(bad("isotopes are not supported"));
    }
    let mut i;
    let (element, aromatic) = if b[0].is_ascii_uppercase() {
        let two = inner.get(..2).filter(|s| s.as_bytes()[1].is_ascii_lowercase());
        match two {
            Some(t) if is_element(t) => {
                i = 2;
                (t.to_string(), false)
            }
            _ => {
                i = 1;
                (inner[..1].to_string(), false)
            }
        }
    } else {
        let sym = AROMATIC_BRACKET
            .iter()
            .find(|s| inner.starts_with(**s))
            .ok_or_else(|| bad("unknown element"))?;
        i = sym.len();
        (canonical_element(sym), true)
    };
    if !is_element(&element) {
        return Err(bad("unknown element"));
    }
    if element == "H" {
        return Err(bad("explicit hydrogen atoms are not supported"));
    }
    if b.get(i) == Some(&b'@') {
        return Err(SmilesError::Stereo { pos: pos + 1 + i, ch: '@' });
    }
    let mut hydrogens = Some(0);
    if b.get(i) == Some(&b'H') {
        i += 1;
        let start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        hydrogens = Some(if start == i {
            1
        } else {
            inner[start..i].parse().map_err(|_| bad("bad hydrogen count"))?
        });
    }
    let mut charge: i8 = 0;
    if let Some(&sign) = b.get(i).filter(|c| **c == b'+' || **c == b'-') {
        let unit: i8 = if sign == b'+' { 1 } else { -1 };
        i += 1;
        let start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        if start < i {
            let n: i8 = inner[start..i].parse().map_err(|_| bad("bad charge"))?;
            charge = unit * n;
        } else {
            charge = unit;
            while b.get(i) == Some(&sign) {
                charge += unit;
                i += 1;
            }
        }
    }
    if i != b.len() {
        return Err(bad(&format!("unexpected '{}'", &inner[i..])));
    }
    Ok(Atom { element, aromatic, charge, hydrogens, bracketed: true })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    fn from_symbol(s: &str) -> BondOrder {
        match s {
            "=" => BondOrder::Double,
            "#" => BondOrder::Triple,
            ":" => BondOrder::Aromatic,
            _ => BondOrder::Single,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }
}

/// Heavy-atom molecular graph with atoms in SMILES order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MolGraph {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
    /// Token index (in the tokenized source) of each atom.
    pub source_order: Vec<usize>,
}

impl MolGraph {
    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    /// Neighbour lists as `(neighbour, bond index)`, sorted by neighbour index.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.atoms.len()];
        for (k, bond) in self.bonds.iter().enumerate() {
            adj[bond.a].push((bond.b, k));
            adj[bond.b].push((bond.a, k));
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        if self.atoms.is_empty() {
            return false;
        }
        let adj = self.adjacency();
        let mut seen = vec![false; self.atoms.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &(u, _) in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<&Bond> {
        self.bonds
            .iter()
            .find(|bd| (bd.a == a && bd.b == b) || (bd.a == b && bd.b == a))
    }

    pub fn count_element(&self, element: &str) -> usize {
        self.atoms.iter().filter(|a| a.element == element).count()
    }
}

impl fmt::Display for MolGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match crate::chem::write_smiles(self, 0, crate::chem::NeighborOrder::Default) {
            Ok(w) => f.write_str(&w.smiles),
            Err(_) => write!(f, "<{} atoms, {} bonds>", self.atoms.len(), self.bonds.len()),
        }
    }
}

struct RingOpen {
    atom: usize,
    bond: Option<String>,
    pos: usize,
}

pub fn parse_smiles(smiles: &str) -> Result<MolGraph, SmilesError> {
    let tok = tokenize_smiles(smiles)?;
    if tok.tokens.is_empty() {
        return Err(SmilesError::Empty);
    }
    let offsets = tok.offsets();
    let mut g = MolGraph { atoms: Vec::new(), bonds: Vec::new(), source_order: Vec::new() };
    let mut prev: Option<usize> = None;
    let mut pending: Option<(String, usize)> = None;
    let mut branches: Vec<(Option<usize>, usize)> = Vec::new();
    let mut rings: HashMap<u32, RingOpen> = HashMap::new();

    let default_order = |g: &MolGraph, a: usize, b: usize| {
        if g.atoms[a].aromatic && g.atoms[b].aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        }
    };

    for (ti, (token, &pos)) in tok.tokens.iter().zip(&offsets).enumerate() {
        let first = token.as_bytes()[0];
        if tok.atom_mask[ti] {
            let atom = if first == b'[' { parse_bracket(token, pos)? } else { Atom::organic(token) };
            let idx = g.atoms.len();
            g.atoms.push(atom);
            g.source_order.push(ti);
            if let Some(p) = prev {
                let order = match pending.take() {
                    Some((sym, _)) => BondOrder::from_symbol(&sym),
                    None => default_order(&g, p, idx),
                };
                g.bonds.push(Bond { a: p, b: idx, order });
            } else if let Some((_, bpos)) = pending {
                return Err(SmilesError::MisplacedBond { pos: bpos });
            }
            prev = Some(idx);
            continue;
        }
        match first {
            b'-' | b'=' | b'#' | b':' => {
                if pending.is_some() || prev.is_none() {
                    return Err(SmilesError::MisplacedBond { pos });
                }
                pending = Some((token.clone(), pos));
            }
            b'(' => {
                if prev.is_none() {
                    return Err(SmilesError::MissingAtom { pos, token: token.clone() });
                }
                if let Some((_, bpos)) = pending {
                    return Err(SmilesError::MisplacedBond { pos: bpos });
                }
                branches.push((prev, pos));
            }
            b')' => {
                if let Some((_, bpos)) = pending {
                    return Err(SmilesError::MisplacedBond { pos: bpos });
                }
                let (p, _) = branches.pop().ok_or(SmilesError::UnmatchedClose { pos })?;
                prev = p;
            }
            _ => {
                // ring closure digit or %nn
                let label: u32 = token.trim_start_matches('%').parse().expect("digits");
                let Some(cur) = prev else {
                    return Err(SmilesError::MissingAtom { pos, token: token.clone() });
                };
                let here = pending.take().map(|(s, _)| s);
                if let Some(open) = rings.remove(&label) {
                    let sym = match (open.bond, here) {
                        (Some(a), Some(b)) if a != b => {
                            return Err(SmilesError::RingBondConflict { pos, label })
                        }
                        (Some(a), _) => Some(a),
                        (None, b) => b,
                    };
                    if open.atom == cur || g.bond_between(open.atom, cur).is_some() {
                        return Err(SmilesError::InvalidRingBond { pos, label });
                    }
                    let order = match sym {
                        Some(s) => BondOrder::from_symbol(&s),
                        None => default_order(&g, open.atom, cur),
                    };
                    g.bonds.push(Bond { a: open.atom, b: cur, order });
                } else {
                    rings.insert(label, RingOpen { atom: cur, bond: here, pos });
                }
            }
        }
    }
    if let Some((_, bpos)) = pending {
        return Err(SmilesError::MisplacedBond { pos: bpos });
    }
    if let Some(&(_, pos)) = branches.first() {
        return Err(SmilesError::UnclosedBranch { pos });
    }
    if let Some((&label, open)) = rings.iter().min_by_key(|(_, o)| o.pos) {
        return Err(SmilesError::DanglingRing { pos: open.pos, label });
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    const APPENDIX_LIGAND: &str = "CCCC(C(=O)Nc1ccc(S(N)(=O)=O)cc1)C(C)(C)C";

    #[test]
    fn tokenizes_reference_ligand() {
        let t = tokenize_smiles(APPENDIX_LIGAND).unwrap();
        assert_eq!(t.tokens.len(), 40);
        assert_eq!(t.atom_count, 21);
        assert_eq!(t.tokens.concat(), APPENDIX_LIGAND);
    }

    #[test]
    fn tokenizes_branch_example() {
        let t = tokenize_smiles("C(=O)N").unwrap();
        assert_eq!(t.tokens, ["C", "(", "=", "O", ")", "N"]);
        assert_eq!(t.atom_mask, [true, false, false, true, false, true]);
        assert_eq!(t.atom_count, 3);
    }

    #[test]
    fn empty_string_has_no_tokens() {
        let t = tokenize_smiles("").unwrap();
        assert!(t.tokens.is_empty());
        assert_eq!(t.atom_count, 0);
        assert_eq!(parse_smiles(""), Err(SmilesError::Empty));
    }

    #[test]
    fn two_letter_and_bracket_tokens() {
        let t = tokenize_smiles("ClC(Br)[NH3+]%12CC%12").unwrap();
        assert_eq!(t.tokens, ["Cl", "C", "(", "Br", ")", "[NH3+]", "%12", "C", "C", "%12"]);
        assert_eq!(t.atom_count, 6);
    }

    #[test]
    fn rejects_unsupported_input_with_position() {
        assert_eq!(
            tokenize_smiles("CC/C=C/C"),
            Err(SmilesError::Stereo { pos: 2, ch: '/' })
        );
        assert_eq!(tokenize_smiles("CCX"), Err(SmilesError::UnsupportedChar { pos: 2, ch: 'X' }));
        assert_eq!(tokenize_smiles("C.C"), Err(SmilesError::UnsupportedChar { pos: 1, ch: '.' }));
        assert!(matches!(tokenize_smiles("[C@H](C)N"), Err(SmilesError::Stereo { .. })));
        assert!(matches!(tokenize_smiles("[13C]"), Err(SmilesError::BadBracket { pos: 0, .. })));
        assert!(matches!(tokenize_smiles("C[H]"), Err(SmilesError::BadBracket { pos: 1, .. })));
        assert!(matches!(tokenize_smiles("C[NH4"), Err(SmilesError::BadBracket { .. })));
    }

    #[test]
    fn parses_ethanol() {
        let g = parse_smiles("CCO").unwrap();
        assert_eq!(g.atom_count(), 3);
        assert_eq!(g.bonds.len(), 2);
        assert!(g.bonds.iter().all(|b| b.order == BondOrder::Single));
        assert_eq!(g.source_order, [0, 1, 2]);
    }

    #[test]
    fn parses_benzene_ring() {
        let g = parse_smiles("c1ccccc1").unwrap();
        assert_eq!(g.atom_count(), 6);
        assert_eq!(g.bonds.len(), 6);
        assert!(g.atoms.iter().all(|a| a.aromatic));
        assert!(g.bonds.iter().all(|b| b.order == BondOrder::Aromatic));
        assert!(g.bond_between(0, 5).is_some());
    }

    #[test]
    fn explicit_single_between_aromatics() {
        let g = parse_smiles("c1ccccc1-c1ccccc1").unwrap();
        assert_eq!(g.bond_between(5, 6).unwrap().order, BondOrder::Single);
    }

    #[test]
    fn bracket_atom_fields() {
        let g = parse_smiles("C[NH3+]").unwrap();
        let n = &g.atoms[1];
        assert_eq!((n.element.as_str(), n.charge, n.hydrogens), ("N", 1, Some(3)));
        assert_eq!(n.smiles_text(), "[NH3+]");
        let o = &parse_smiles("[O--]").unwrap().atoms[0];
        assert_eq!(o.charge, -2);
        assert_eq!(o.smiles_text(), "[O-2]");
        let se = &parse_smiles("[se]1cccc1").unwrap().atoms[0];
        assert!(se.aromatic);
        assert_eq!(se.element, "Se");
    }

    #[test]
    fn malformed_inputs_are_positioned() {
        assert_eq!(parse_smiles("C1CC"), Err(SmilesError::DanglingRing { pos: 1, label: 1 }));
        assert_eq!(parse_smiles("CC(C"), Err(SmilesError::UnclosedBranch { pos: 2 }));
        assert_eq!(parse_smiles("CC)C"), Err(SmilesError::UnmatchedClose { pos: 2 }));
        assert_eq!(parse_smiles("CC="), Err(SmilesError::MisplacedBond { pos: 2 }));
        assert_eq!(parse_smiles("=CC"), Err(SmilesError::MisplacedBond { pos: 0 }));
        assert!(matches!(parse_smiles("(C)C"), Err(SmilesError::MissingAtom { pos: 0, .. })));
        assert!(matches!(parse_smiles("C11"), Err(SmilesError::InvalidRingBond { .. })));
        assert!(matches!(parse_smiles("C=1CC#1"), Err(SmilesError::RingBondConflict { .. })));
    }

    #[test]
    fn ring_bond_symbol_on_either_side() {
        let a = parse_smiles("C=1CCC1").unwrap();
        let b = parse_smiles("C1CCC=1").unwrap();
        assert_eq!(a.bond_between(0, 3).unwrap().order, BondOrder::Double);
        assert_eq!(b.bond_between(0, 3).unwrap().order, BondOrder::Double);
    }

    #[test]
    fn ring_labels_can_be_reused() {
        let g = parse_smiles("C1CC1C1CC1").unwrap();
        assert_eq!(g.bonds.len(), 7);
        assert!(g.is_connected());
    }
}
