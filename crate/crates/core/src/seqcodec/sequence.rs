use std::fmt;
use std::ops::Range;

use serde::Serialize;

use super::vocab::{is_coord_id, Special, Vocabulary};
use crate::chem::{is_atom_token, parse_smiles};

/// Aligned token ids and numbers. Non-coordinate slots carry exactly 1.0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParallelSequence {
    pub tokens: Vec<u32>,
    pub numbers: Vec<f64>,
}

impl ParallelSequence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Appends a non-coordinate token with its 1.0 padding.
    pub fn push_token(&mut self, id: u32) {
        self.tokens.push(id);
        self.numbers.push(1.0);
    }

    pub fn push(&mut self, id: u32, number: f64) {
        self.tokens.push(id);
        self.numbers.push(number);
    }

    pub fn push_special(&mut self, s: Special) {
        self.push_token(s.id());
    }

    /// `[x] [y] [z]` carrying one point.
    pub fn push_point(&mut self, p: [f64; 3]) {
        for (axis, v) in Special::AXES.iter().zip(p) {
            self.push(axis.id(), v);
        }
    }

    pub fn extend(&mut self, other: &ParallelSequence) {
        self.tokens.extend_from_slice(&other.tokens);
        self.numbers.extend_from_slice(&other.numbers);
    }

    pub fn truncated(&self, len: usize) -> ParallelSequence {
        ParallelSequence {
            tokens: self.tokens[..len].to_vec(),
            numbers: self.numbers[..len].to_vec(),
        }
    }

    /// Human-readable token strings.
    pub fn token_strings<'v>(&self, vocab: &'v Vocabulary) -> Vec<&'v str> {
        self.tokens.iter().map(|&t| vocab.token(t).unwrap_or("<?>")).collect()
    }
}

/// Rule violated by a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    LengthParity,
    UnknownToken,
    PadToken,
    NonFinite,
    Padding,
    DelimiterOrder,
    SectionContent,
    TripletStructure,
    SpanLength,
    SmilesSyntax,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::LengthParity => "length-parity",
            Rule::UnknownToken => "unknown-token",
            Rule::PadToken => "pad-token",
            Rule::NonFinite => "non-finite",
            Rule::Padding => "padding",
            Rule::DelimiterOrder => "delimiter-order",
            Rule::SectionContent => "section-content",
            Rule::TripletStructure => "triplet-structure",
            Rule::SpanLength => "span-length",
            Rule::SmilesSyntax => "smiles-syntax",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub position: usize,
    pub rule: Rule,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "position {}: [{}] {}", self.position, self.rule, self.message)
    }
}

fn diag(position: usize, rule: Rule, message: impl Into<String>) -> Diagnostic {
    Diagnostic { position, rule, message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PocketLayout {
    /// Atom tokens, exclusive of `[PS]`/`[PE]`.
    pub atoms: Range<usize>,
    /// Coordinate tokens, exclusive of `[PCS]`/`[PCE]`.
    pub coords: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LigandLayout {
    pub smiles: Range<usize>,
    pub coords: Range<usize>,
}

/// Section spans of a well-formed sequence.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Layout {
    pub pocket: Option<PocketLayout>,
    pub ligand: Option<LigandLayout>,
}

struct Scanner<'a> {
    tokens: &'a [u32],
    pos: usize,
}

impl Scanner<'_> {
    fn expect(&mut self, s: Special, what: &str) -> Result<(), Diagnostic> {
        match self.tokens.get(self.pos) {
            Some(&t) if t == s.id() => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(diag(self.pos, Rule::DelimiterOrder, format!("expected {what}"))),
        }
    }

    /// Non-special content up to `end`; returns its span.
    fn content_until(&mut self, end: Special, what: &str) -> Result<Range<usize>, Diagnostic> {
        let start = self.pos;
        loop {
            match self.tokens.get(self.pos) {
                None => {
                    return Err(diag(self.pos, Rule::DelimiterOrder, format!("missing {what}")))
                }
                Some(&t) if t == end.id() => break,
                Some(&t) if t < 12 => {
                    return Err(diag(
                        self.pos,
                        Rule::SectionContent,
                        format!("delimiter or coordinate token inside section ending with {what}"),
                    ))
                }
                Some(_) => self.pos += 1,
            }
        }
        let span = start..self.pos;
        self.pos += 1;
        Ok(span)
    }

    /// `([x][y][z])*` up to `end`, checked against `expected_points`.
    fn coords_until(
        &mut self,
        end: Special,
        what: &str,
        expected_points: usize,
    ) -> Result<Range<usize>, Diagnostic> {
        let start = self.pos;
        loop {
            match self.tokens.get(self.pos) {
                None => {
                    return Err(diag(self.pos, Rule::DelimiterOrder, format!("missing {what}")))
                }
                Some(&t) if t == end.id() => break,
                Some(&t) if !is_coord_id(t) => {
                    return Err(diag(
                        self.pos,
                        Rule::SectionContent,
                        "non-coordinate token inside coordinate span",
                    ))
                }
                Some(&t) => {
                    let want = Special::AXES[(self.pos - start) % 3].id();
                    if t != want {
                        return Err(diag(self.pos, Rule::TripletStructure, "axes out of [x][y][z] order"));
                    }
                    self.pos += 1;
                }
            }
        }
        let span = start..self.pos;
        if span.len() % 3 != 0 {
            return Err(diag(
                self.pos,
                Rule::TripletStructure,
                format!("coordinate span of {} tokens is not a whole number of triplets", span.len()),
            ));
        }
        if span.len() != 3 * expected_points {
            return Err(diag(
                start,
                Rule::SpanLength,
                format!("{} coordinate tokens for {} atoms", span.len(), expected_points),
            ));
        }
        self.pos += 1;
        Ok(span)
    }
}

/// Parses the delimiter grammar `P? L?` (at least one section).
///
/// Atom counts for ligands come from the token strings in `vocab`.
pub fn layout(seq: &ParallelSequence, vocab: &Vocabulary) -> Result<Layout, Diagnostic> {
    let mut sc = Scanner { tokens: &seq.tokens, pos: 0 };
    let mut out = Layout::default();
    if seq.tokens.first() == Some(&Special::PocketStart.id()) {
        sc.pos += 1;
        let atoms = sc.content_until(Special::PocketEnd, "[PE]")?;
        sc.expect(Special::PocketCoordStart, "[PCS]")?;
        let coords = sc.coords_until(Special::PocketCoordEnd, "[PCE]", atoms.len())?;
        out.pocket = Some(PocketLayout { atoms, coords });
    }
    if seq.tokens.get(sc.pos) == Some(&Special::LigandStart.id()) {
        sc.pos += 1;
        let smiles = sc.content_until(Special::LigandEnd, "[LE]")?;
        let n_atoms = seq.tokens[smiles.clone()]
            .iter()
            .filter(|&&t| vocab.token(t).is_some_and(is_atom_token))
            .count();
        sc.expect(Special::LigandCoordStart, "[LCS]")?;
        let coords = sc.coords_until(Special::LigandCoordEnd, "[LCE]", n_atoms)?;
        out.ligand = Some(LigandLayout { smiles, coords });
    }
    if out.pocket.is_none() && out.ligand.is_none() {
        return Err(diag(0, Rule::DelimiterOrder, "sequence must start with [PS] or [LS]"));
    }
    if sc.pos != seq.tokens.len() {
        return Err(diag(sc.pos, Rule::DelimiterOrder, "unexpected tokens after the last section"));
    }
    Ok(out)
}

/// All invariant violations found in `seq`; empty means valid.
pub fn validate(seq: &ParallelSequence, vocab: &Vocabulary) -> Vec<Diagnostic> {
    if seq.tokens.len() != seq.numbers.len() {
        return vec![diag(
            seq.tokens.len().min(seq.numbers.len()),
            Rule::LengthParity,
            format!("{} tokens but {} numbers", seq.tokens.len(), seq.numbers.len()),
        )];
    }
    let mut out = Vec::new();
    for (i, (&t, &x)) in seq.tokens.iter().zip(&seq.numbers).enumerate() {
        if t as usize >= vocab.len() {
            out.push(diag(i, Rule::UnknownToken, format!("id {t} outside vocabulary")));
        } else if t == Special::Pad.id() {
            out.push(diag(i, Rule::PadToken, "[PAD] inside a stored sequence"));
        }
        if !x.is_finite() {
            out.push(diag(i, Rule::NonFinite, format!("number {x}")));
        } else if !is_coord_id(t) && x.to_bits() != 1.0f64.to_bits() {
            out.push(diag(i, Rule::Padding, format!("non-coordinate slot holds {x}, expected 1.0")));
        }
    }
    if !out.is_empty() {
        return out;
    }
    match layout(seq, vocab) {
        Err(d) => out.push(d),
        Ok(l) => {
            if let Some(lig) = l.ligand {
                let text: String = seq.tokens[lig.smiles.clone()]
                    .iter()
                    .map(|&t| vocab.token(t).unwrap_or(""))
                    .collect();
                if let Err(e) = parse_smiles(&text) {
                    out.push(diag(lig.smiles.start, Rule::SmilesSyntax, e.to_string()));
                }
            }
        }
    }
    out
}
