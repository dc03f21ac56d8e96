use super::sequence::{layout, validate, ParallelSequence};
use super::vocab::{Special, Vocabulary};
use super::CodecError;
use crate::chem::{normalize_complex, tokenize_smiles, Centering, ComplexRecord, Vec3};

/// Default maximum sequence length.
pub const DEFAULT_MAX_LEN: usize = 2048;

/// `[PS] atoms [PE] [PCS] ([x][y][z])* [PCE]`, numbers = coords / `q`.
pub fn encode_pocket(
    vocab: &Vocabulary,
    atoms: &[String],
    coords: &[Vec3],
    q: f64,
) -> Result<ParallelSequence, CodecError> {
    if atoms.len() != coords.len() {
        return Err(CodecError::CoordinateCount {
            section: "pocket",
            atoms: atoms.len(),
            coords: coords.len(),
        });
    }
    check_scale(q)?;
    let mut s = ParallelSequence::new();
    s.push_special(Special::PocketStart);
    for a in atoms {
        let id = vocab.require(a)?;
        if vocab.is_special(id) {
            return Err(CodecError::OutOfVocabulary(a.clone()));
        }
        s.push_token(id);
    }
    s.push_special(Special::PocketEnd);
    s.push_special(Special::PocketCoordStart);
    for p in coords {
        s.push_point(p.map(|v| v / q));
    }
    s.push_special(Special::PocketCoordEnd);
    Ok(s)
}

/// `[LS] smiles tokens [LE]` only; the prompt for coordinate generation.
pub fn encode_ligand_smiles(vocab: &Vocabulary, smiles: &str) -> Result<ParallelSequence, CodecError> {
    let tok = tokenize_smiles(smiles)?;
    if tok.atom_count == 0 {
        return Err(CodecError::NoLigandAtoms);
    }
    let mut s = ParallelSequence::new();
    s.push_special(Special::LigandStart);
    for t in &tok.tokens {
        s.push_token(vocab.require(t)?);
    }
    s.push_special(Special::LigandEnd);
    Ok(s)
}

/// `[LS] smiles [LE] [LCS] ([x][y][z])* [LCE]` with coordinates in SMILES atom order.
pub fn encode_ligand(
    vocab: &Vocabulary,
    smiles: &str,
    coords: &[Vec3],
    q: f64,
) -> Result<ParallelSequence, CodecError> {
    check_scale(q)?;
    let mut s = encode_ligand_smiles(vocab, smiles)?;
    let atoms = tokenize_smiles(smiles)?.atom_count;
    if atoms != coords.len() {
        return Err(CodecError::CoordinateCount { section: "ligand", atoms, coords: coords.len() });
    }
    s.push_special(Special::LigandCoordStart);
    for p in coords {
        s.push_point(p.map(|v| v / q));
    }
    s.push_special(Special::LigandCoordEnd);
    Ok(s)
}

fn check_scale(q: f64) -> Result<(), CodecError> {
    if q > 0.0 && q.is_finite() {
        Ok(())
    } else {
        Err(CodecError::BadScale(q))
    }
}

fn normalized(record: &ComplexRecord, q: f64) -> Result<ComplexRecord, CodecError> {
    if record.normalized {
        Ok(record.clone())
    } else {
        Ok(normalize_complex(record, q, Centering::Joint)?)
    }
}

/// Pocket section followed by ligand section, jointly normalized.
///
/// An unnormalized record is normalized here with a shared center; an
/// already normalized record is encoded as is.
pub fn encode_complex(
    vocab: &Vocabulary,
    record: &ComplexRecord,
    q: f64,
    max_len: usize,
) -> Result<ParallelSequence, CodecError> {
    let r = normalized(record, q)?;
    let mut s = encode_pocket(vocab, &r.pocket_atoms, &r.pocket_coords, 1.0)?;
    s.extend(&encode_ligand(vocab, &r.ligand_smiles, &r.ligand_coords, 1.0)?);
    check_len(s, max_len)
}

/// Like [`encode_complex`], but omits an absent pocket or ligand entirely so
/// pocket-only and ligand-only samples share the same format.
pub fn encode_record(
    vocab: &Vocabulary,
    record: &ComplexRecord,
    q: f64,
    max_len: usize,
) -> Result<ParallelSequence, CodecError> {
    if !record.has_pocket() && !record.has_ligand() {
        return Err(CodecError::EmptyRecord);
    }
    let r = normalized(record, q)?;
    let mut s = ParallelSequence::new();
    if r.has_pocket() {
        s.extend(&encode_pocket(vocab, &r.pocket_atoms, &r.pocket_coords, 1.0)?);
    }
    if r.has_ligand() {
        s.extend(&encode_ligand(vocab, &r.ligand_smiles, &r.ligand_coords, 1.0)?);
    }
    check_len(s, max_len)
}

fn check_len(s: ParallelSequence, max_len: usize) -> Result<ParallelSequence, CodecError> {
    if s.len() > max_len {
        Err(CodecError::TooLong { len: s.len(), max_len })
    } else {
        Ok(s)
    }
}

/// Inverse of the encoders. Coordinates come back multiplied by `q`; the
/// original center is not recoverable, so the record sits at the origin.
pub fn decode(seq: &ParallelSequence, vocab: &Vocabulary, q: f64) -> Result<ComplexRecord, CodecError> {
    check_scale(q)?;
    let diags = validate(seq, vocab);
    if !diags.is_empty() {
        return Err(CodecError::Invalid(diags));
    }
    let l = layout(seq, vocab).map_err(|d| CodecError::Invalid(vec![d]))?;
    let text = |id: u32| vocab.token(id).expect("validated").to_string();
    let points = |span: std::ops::Range<usize>| -> Vec<Vec3> {
        seq.numbers[span].chunks(3).map(|c| [c[0] * q, c[1] * q, c[2] * q]).collect()
    };
    let mut r = ComplexRecord::new(vec![], vec![], "", vec![]);
    if let Some(p) = l.pocket {
        r.pocket_atoms = seq.tokens[p.atoms].iter().map(|&t| text(t)).collect();
        r.pocket_coords = points(p.coords);
    }
    if let Some(lig) = l.ligand {
        r.ligand_smiles = seq.tokens[lig.smiles].iter().map(|&t| text(t)).collect();
        r.ligand_coords = points(lig.coords);
    }
    r.q = q;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqcodec::is_coord_id;

    fn vocab() -> Vocabulary {
        let corpus = [ComplexRecord::new(
            vec!["N".into(), "CA".into(), "C".into(), "O".into()],
            vec![[0.0; 3]; 4],
            "C(=O)N",
            vec![[0.0; 3]; 3],
        )];
        Vocabulary::build(&corpus).unwrap()
    }

    #[test]
    fn pocket_lengths() {
        let v = vocab();
        let s = encode_pocket(&v, &["N".into(), "CA".into()], &[[0.5, 2.0, 3.0], [4.0, 5.0, 6.0]], 1.0)
            .unwrap();
        assert_eq!(s.len(), 12);
        assert_eq!(s.numbers.iter().filter(|&&x| x != 1.0).count(), 6);
        let empty = encode_pocket(&v, &[], &[], 5.0).unwrap();
        assert_eq!(empty.token_strings(&v), ["[PS]", "[PE]", "[PCS]", "[PCE]"]);
        assert!(empty.numbers.iter().all(|&x| x == 1.0));
        assert!(matches!(
            encode_pocket(&v, &["N".into()], &[], 5.0),
            Err(CodecError::CoordinateCount { .. })
        ));
    }

    #[test]
    fn ligand_scaling() {
        let corpus = [ComplexRecord::new(vec![], vec![], "CC", vec![[0.0; 3]; 2])];
        let v = Vocabulary::build(&corpus).unwrap();
        let s = encode_ligand(&v, "CC", &[[0.0, 0.0, 0.0], [1.5, 0.0, 0.0]], 5.0).unwrap();
        assert_eq!(s.token_strings(&v)[1..3], ["C", "C"]);
        let nums: Vec<f64> = s
            .tokens
            .iter()
            .zip(&s.numbers)
            .filter(|(t, _)| is_coord_id(**t))
            .map(|(_, x)| *x)
            .collect();
        assert_eq!(nums, [0.0, 0.0, 0.0, 0.3, 0.0, 0.0]);
        assert!(matches!(encode_ligand(&v, "", &[], 5.0), Err(CodecError::NoLigandAtoms)));
        assert!(matches!(
            encode_ligand(&v, "CC", &[[0.0; 3]], 5.0),
            Err(CodecError::CoordinateCount { atoms: 2, coords: 1, .. })
        ));
        assert!(matches!(
            encode_ligand(&v, "CO", &[[0.0; 3]; 2], 5.0),
            Err(CodecError::OutOfVocabulary(t)) if t == "O"
        ));
    }

    #[test]
    fn complex_length_is_sum_of_sections() {
        let corpus = [ComplexRecord::new(
            vec!["N".into(), "C".into()],
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]],
            "CC",
            vec![[2.0, 0.0, 0.0], [3.0, 1.0, 0.0]],
        )];
        let v = Vocabulary::build(&corpus).unwrap();
        let s = encode_complex(&v, &corpus[0], 5.0, DEFAULT_MAX_LEN).unwrap();
        assert_eq!(s.len(), 24);
        assert!(validate(&s, &v).is_empty());
        assert!(matches!(
            encode_complex(&v, &corpus[0], 5.0, 23),
            Err(CodecError::TooLong { len: 24, max_len: 23 })
        ));
    }

    #[test]
    fn sections_can_be_omitted() {
        let v = vocab();
        let lig = ComplexRecord::new(vec![], vec![], "C(=O)N", vec![[0.0, 1.0, 0.0]; 3]);
        let s = encode_record(&v, &lig, 5.0, DEFAULT_MAX_LEN).unwrap();
        assert_eq!(s.tokens[0], Special::LigandStart.id());
        assert!(validate(&s, &v).is_empty());
        let poc = ComplexRecord::new(vec!["O".into()], vec![[1.0, 1.0, 1.0]], "", vec![]);
        let s = encode_record(&v, &poc, 5.0, DEFAULT_MAX_LEN).unwrap();
        assert_eq!(s.len(), 8);
        let back = decode(&s, &v, 5.0).unwrap();
        assert_eq!(back.pocket_atoms, ["O"]);
        assert_eq!(back.pocket_coords, [[0.0; 3]]);
        assert!(!back.has_ligand());
        let none = ComplexRecord::new(vec![], vec![], "", vec![]);
        assert!(matches!(encode_record(&v, &none, 5.0, 100), Err(CodecError::EmptyRecord)));
    }

    #[test]
    fn decode_rejects_invalid() {
        let v = vocab();
        let lig = ComplexRecord::new(vec![], vec![], "C(=O)N", vec![[0.0, 1.0, 0.0]; 3]);
        let mut s = encode_record(&v, &lig, 5.0, DEFAULT_MAX_LEN).unwrap();
        s.numbers[1] = 2.0;
        assert!(matches!(decode(&s, &v, 5.0), Err(CodecError::Invalid(d)) if d[0].position == 1));
    }
}
