use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::sequence::ParallelSequence;
use super::vocab::Vocabulary;
use super::CodecError;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SequenceLine {
    tokens: Vec<String>,
    numbers: Vec<f32>,
}

/// One JSON object per line: `{"tokens": [...], "numbers": [...]}`.
/// Numbers are written at 32-bit precision.
pub fn write_sequences<'a>(
    mut out: impl Write,
    vocab: &Vocabulary,
    seqs: impl IntoIterator<Item = &'a ParallelSequence>,
) -> Result<(), CodecError> {
    for s in seqs {
        let line = SequenceLine {
            tokens: s.token_strings(vocab).into_iter().map(String::from).collect(),
            numbers: s.numbers.iter().map(|&x| x as f32).collect(),
        };
        serde_json::to_writer(&mut out, &line).map_err(|e| CodecError::Io(e.into()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_sequences(input: impl BufRead, vocab: &Vocabulary) -> Result<Vec<ParallelSequence>, CodecError> {
    let mut seqs = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: SequenceLine = serde_json::from_str(&line)
            .map_err(|e| CodecError::Parse { line: i + 1, reason: e.to_string() })?;
        if parsed.tokens.len() != parsed.numbers.len() {
            return Err(CodecError::Parse {
                line: i + 1,
                reason: format!(
                    "{} tokens but {} numbers",
                    parsed.tokens.len(),
                    parsed.numbers.len()
                ),
            });
        }
        let tokens = parsed
            .tokens
            .iter()
            .map(|t| vocab.require(t))
            .collect::<Result<Vec<_>, _>>()?;
        let numbers = parsed.numbers.iter().map(|&x| x as f64).collect();
        seqs.push(ParallelSequence { tokens, numbers });
    }
    Ok(seqs)
}
