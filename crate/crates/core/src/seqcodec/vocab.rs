use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CodecError;
use crate::chem::{tokenize_smiles, ComplexRecord};

/// Delimiter and coordinate tokens, always ids `0..12` in this order.
pub const SPECIAL_TOKENS: [&str; 12] = [
    "[PS]", "[PE]", "[PCS]", "[PCE]", "[LS]", "[LE]", "[LCS]", "[LCE]", "[x]", "[y]", "[z]",
    "[PAD]",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u32)]
pub enum Special {
    PocketStart = 0,
    PocketEnd = 1,
    PocketCoordStart = 2,
    PocketCoordEnd = 3,
    LigandStart = 4,
    LigandEnd = 5,
    LigandCoordStart = 6,
    LigandCoordEnd = 7,
    X = 8,
    Y = 9,
    Z = 10,
    Pad = 11,
}

impl Special {
    pub const fn id(self) -> u32 {
        self as u32
    }

    pub const AXES: [Special; 3] = [Special::X, Special::Y, Special::Z];
}

/// True for the `[x]`, `[y]`, `[z]` ids.
pub fn is_coord_id(id: u32) -> bool {
    (Special::X.id()..=Special::Z.id()).contains(&id)
}

/// Closed token vocabulary: specials first, then every observed pocket atom
/// and SMILES token in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = CodecError;

    fn try_from(tokens: Vec<String>) -> Result<Self, CodecError> {
        Vocabulary::from_tokens(tokens)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

/// Branch, bond and ring-closure symbols any rewrite of a SMILES string may
/// use, added to every built vocabulary.
pub const SMILES_STRUCTURE_TOKENS: [&str; 15] =
    ["(", ")", "-", "=", "#", ":", "1", "2", "3", "4", "5", "6", "7", "8", "9"];

impl Vocabulary {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, CodecError> {
        if tokens.len() < SPECIAL_TOKENS.len()
            || tokens.iter().zip(SPECIAL_TOKENS).any(|(t, s)| t != s)
        {
            return Err(CodecError::BadVocabulary("special tokens must come first, in order".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(CodecError::BadVocabulary(format!("duplicate token '{t}'")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn build<'a>(corpus: impl IntoIterator<Item = &'a ComplexRecord>) -> Result<Self, CodecError> {
        let mut seen = BTreeSet::new();
        let mut any = false;
        for r in corpus {
            any = true;
            seen.extend(r.pocket_atoms.iter().cloned());
            if !r.ligand_smiles.is_empty() {
                seen.extend(tokenize_smiles(&r.ligand_smiles)?.tokens);
            }
        }
        if !any {
            return Err(CodecError::EmptyCorpus);
        }
        seen.extend(SMILES_STRUCTURE_TOKENS.iter().map(|s| s.to_string()));
        for s in SPECIAL_TOKENS {
            seen.remove(s);
        }
        let tokens = SPECIAL_TOKENS.iter().map(|s| s.to_string()).chain(seen).collect();
        Vocabulary::from_tokens(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn require(&self, token: &str) -> Result<u32, CodecError> {
        self.id(token).ok_or_else(|| CodecError::OutOfVocabulary(token.to_string()))
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_special(&self, id: u32) -> bool {
        (id as usize) < SPECIAL_TOKENS.len()
    }

    /// Non-special tokens that can stand in a pocket atom list.
    pub fn pocket_atoms(&self) -> impl Iterator<Item = &str> {
        self.tokens[SPECIAL_TOKENS.len()..]
            .iter()
            .map(String::as_str)
            .filter(|t| *t == "CA" || crate::chem::is_element(t))
    }

    /// Non-special tokens that are single SMILES tokens.
    pub fn smiles_tokens(&self) -> impl Iterator<Item = &str> {
        self.tokens[SPECIAL_TOKENS.len()..]
            .iter()
            .map(String::as_str)
            .filter(|t| tokenize_smiles(t).is_ok_and(|s| s.tokens.len() == 1))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.tokens).expect("strings serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, CodecError> {
        let tokens: Vec<String> =
            serde_json::from_str(text).map_err(|e| CodecError::BadVocabulary(e.to_string()))?;
        Vocabulary::from_tokens(tokens)
    }

    /// SHA-256 of the JSON serialization, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(pocket: &[&str], smiles: &str) -> ComplexRecord {
        let n = crate::chem::tokenize_smiles(smiles).unwrap().atom_count;
        ComplexRecord::new(
            pocket.iter().map(|s| s.to_string()).collect(),
            vec![[0.0; 3]; pocket.len()],
            smiles,
            vec![[0.0; 3]; n],
        )
    }

    #[test]
    fn single_ligand_vocabulary() {
        let v = Vocabulary::build([&rec(&[], "CC")]).unwrap();
        assert_eq!(v.len(), 12 + SMILES_STRUCTURE_TOKENS.len() + 1);
        assert_eq!(v.token(v.len() as u32 - 1), Some("C"));
        assert!(SMILES_STRUCTURE_TOKENS.iter().all(|t| v.id(t).is_some()));
        assert_eq!(v.id("[LE]"), Some(Special::LigandEnd.id()));
    }

    #[test]
    fn ca_and_c_are_distinct() {
        let v = Vocabulary::build([&rec(&["N", "CA"], "C")]).unwrap();
        let ca = v.id("CA").unwrap();
        let c = v.id("C").unwrap();
        assert_ne!(ca, c);
        assert_eq!(v.len(), 12 + SMILES_STRUCTURE_TOKENS.len() + 3);
        let pocket: Vec<_> = v.pocket_atoms().collect();
        assert_eq!(pocket, ["C", "CA", "N"]);
        let smiles: Vec<_> = v.smiles_tokens().collect();
        let expect: Vec<&str> = SMILES_STRUCTURE_TOKENS.iter().copied().chain(["C", "N"]).collect();
        let mut smiles = smiles;
        smiles.sort();
        let mut expect = expect;
        expect.sort();
        assert_eq!(smiles, expect);
    }

    #[test]
    fn build_is_deterministic_and_dense() {
        let corpus = [rec(&["O", "N"], "c1ccccc1O"), rec(&["S"], "CC(=O)N")];
        let a = Vocabulary::build(&corpus).unwrap();
        let b = Vocabulary::build(&corpus).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.hash(), b.hash());
        for (i, t) in a.tokens().iter().enumerate() {
            assert_eq!(a.id(t), Some(i as u32));
        }
        let back = Vocabulary::from_json(&a.to_json()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn empty_corpus_and_bad_files() {
        assert!(matches!(Vocabulary::build(&[]), Err(CodecError::EmptyCorpus)));
        assert!(Vocabulary::from_json("[\"C\"]").is_err());
        let mut dup: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        dup.push("C".into());
        dup.push("C".into());
        assert!(Vocabulary::from_tokens(dup).is_err());
    }
}
