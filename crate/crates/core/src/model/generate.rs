//! Token-mode sampling, numerical-mode coordinate decoding and span
//! log-likelihoods.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::forward::Session;
use super::ops::{log_prob, softmax};
use super::weights::Weights;
use super::ModelError;
use crate::seqcodec::{ParallelSequence, Special};
use crate::Scalar;

/// Result of token-mode sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub seq: ParallelSequence,
    /// False when `max_new` ran out before the stop token.
    pub completed: bool,
}

/// Draws an index from `softmax(logits / temperature)`; temperature 0 is argmax.
pub fn sample_index<T: Scalar, R: Rng + ?Sized>(logits: &[T], temperature: f64, rng: &mut R) -> usize {
    if temperature == 0.0 {
        let mut best = 0;
        for (i, &x) in logits.iter().enumerate() {
            if x > logits[best] {
                best = i;
            }
        }
        return best;
    }
    let scaled: Vec<f64> = logits.iter().map(|x| x.as_f64() / temperature).collect();
    let p = softmax(&scaled);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|&x| x > 0.0).unwrap_or(0)
}

fn feed<'w, T: Scalar>(w: &'w Weights<T>, prefix: &ParallelSequence) -> Result<Session<'w, T>, ModelError> {
    if prefix.is_empty() {
        return Err(ModelError::Shape("empty prefix".into()));
    }
    let mut s = Session::new(w);
    for (&t, &x) in prefix.tokens.iter().zip(&prefix.numbers) {
        s.push(t, Some(T::of(x)))?;
    }
    Ok(s)
}

/// Token mode: samples until `stop` or `max_new` new tokens, every appended
/// number exactly 1.0.
pub fn generate_tokens<T: Scalar>(
    w: &Weights<T>,
    prefix: &ParallelSequence,
    stop: u32,
    max_new: usize,
    temperature: f64,
    seed: u64,
) -> Result<Generated, ModelError> {
    if !(temperature >= 0.0 && temperature.is_finite()) {
        return Err(ModelError::BadTemperature(temperature));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = feed(w, prefix)?;
    let mut seq = prefix.clone();
    for _ in 0..max_new {
        if s.len() >= w.config.max_len {
            break;
        }
        let next = sample_index(s.last_logits().expect("non-empty"), temperature, &mut rng) as u32;
        seq.push_token(next);
        if next == stop {
            return Ok(Generated { seq, completed: true });
        }
        s.push(next, Some(T::one()))?;
    }
    Ok(Generated { seq, completed: false })
}

/// Numerical mode: appends `[LCS] ([x][y][z])×atoms [LCE]`, each coordinate
/// taken from the number head at the preceding position.
pub fn generate_coordinates<T: Scalar>(
    w: &Weights<T>,
    prefix: &ParallelSequence,
    atom_count: usize,
) -> Result<ParallelSequence, ModelError> {
    if atom_count == 0 {
        return Err(ModelError::NoAtoms);
    }
    if prefix.tokens.last() != Some(&Special::LigandEnd.id()) {
        return Err(ModelError::BadPrefix);
    }
    let total = prefix.len() + 3 * atom_count + 2;
    if total > w.config.max_len {
        return Err(ModelError::TooLong { len: total, max_len: w.config.max_len });
    }
    let mut s = feed(w, prefix)?;
    let mut seq = prefix.clone();
    seq.push_special(Special::LigandCoordStart);
    s.push(Special::LigandCoordStart.id(), Some(T::one()))?;
    for _ in 0..atom_count {
        for axis in Special::AXES {
            let x = s.last_number().expect("non-empty");
            if !x.is_finite() {
                return Err(ModelError::NonFinite(format!("predicted coordinate at position {}", s.len())));
            }
            seq.push(axis.id(), x.as_f64());
            s.push(axis.id(), Some(x))?;
        }
    }
    seq.push_special(Special::LigandCoordEnd);
    Ok(seq)
}

/// Σ over `t` in `span` of `log p(tokens[t] | tokens[..t])`.
pub fn log_likelihood<T: Scalar>(
    w: &Weights<T>,
    seq: &ParallelSequence,
    span: Range<usize>,
) -> Result<T, ModelError> {
    if span.start == 0 || span.start > span.end || span.end > seq.len() {
        return Err(ModelError::BadSpan { start: span.start, end: span.end, len: seq.len() });
    }
    let mut s = Session::new(w);
    for t in 0..span.end - 1 {
        s.push(seq.tokens[t], Some(T::of(seq.numbers[t])))?;
    }
    Ok(span
        .map(|t| log_prob(s.logits_at(t - 1), seq.tokens[t] as usize))
        .fold(T::zero(), |a, b| a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::seqcodec::is_coord_id;

    fn weights(seed: u64) -> Weights<f64> {
        let c = ModelConfig { n_layers: 1, n_heads: 2, d_model: 8, max_len: 96, vocab_size: 16, dropout: 0.0 };
        Weights::init(&c, seed).unwrap()
    }

    fn prefix() -> ParallelSequence {
        let mut p = ParallelSequence::new();
        p.push_special(Special::LigandStart);
        p
    }

    #[test]
    fn uniform_model_likelihood() {
        let mut w = weights(0);
        let head = w.layout.head_tok;
        w.params[head..head + 8 * 16].fill(0.0);
        let mut seq = prefix();
        for t in [12, 13, 14, 12] {
            seq.push_token(t);
        }
        let ll = log_likelihood(&w, &seq, 1..5).unwrap();
        assert!((ll - 4.0 * (1.0f64 / 16.0).ln()).abs() < 1e-12);
        let parts: f64 = (1..5).map(|t| log_likelihood(&w, &seq, t..t + 1).unwrap()).sum();
        assert!((parts - ll).abs() < 1e-12);
        assert!(matches!(log_likelihood(&w, &seq, 0..2), Err(ModelError::BadSpan { .. })));
        assert!(matches!(log_likelihood(&w, &seq, 2..9), Err(ModelError::BadSpan { .. })));
    }

    #[test]
    fn confident_model_likelihood_is_zero() {
        let mut w = weights(0);
        // bias the head so token 13 always wins by a wide margin
        let b = w.layout.lnf_b;
        w.params[b..b + 8].fill(1.0);
        let head = w.layout.head_tok;
        for i in 0..8 {
            w.params[head + i * 16 + 13] = 100.0;
        }
        let g = generate_tokens(&w, &prefix(), 5, 6, 0.0, 0).unwrap();
        assert!(!g.completed);
        assert_eq!(g.seq.tokens[1..], [13; 6]);
        let ll = log_likelihood(&w, &g.seq, 1..7).unwrap();
        assert!(ll.abs() < 1e-9, "{ll}");
    }

    #[test]
    fn token_mode_pads_numbers_and_stops() {
        let w = weights(2);
        for seed in 0..20 {
            let g = generate_tokens(&w, &prefix(), Special::LigandEnd.id(), 40, 1.0, seed).unwrap();
            assert!(g.seq.numbers.iter().all(|&x| x == 1.0));
            if g.completed {
                assert_eq!(*g.seq.tokens.last().unwrap(), Special::LigandEnd.id());
                assert_eq!(g.seq.tokens.iter().filter(|&&t| t == Special::LigandEnd.id()).count(), 1);
            } else {
                assert_eq!(g.seq.len(), 41);
            }
            assert_eq!(g, generate_tokens(&w, &prefix(), Special::LigandEnd.id(), 40, 1.0, seed).unwrap());
        }
        assert!(generate_tokens(&w, &prefix(), 5, 4, -1.0, 0).is_err());
    }

    #[test]
    fn numerical_mode_structure() {
        let w = weights(3);
        let mut p = prefix();
        for _ in 0..21 {
            p.push_token(12);
        }
        p.push_special(Special::LigandEnd);
        let out = generate_coordinates(&w, &p, 21).unwrap();
        let tail = &out.tokens[p.len()..];
        assert_eq!(tail.len(), 65);
        assert_eq!(tail[0], Special::LigandCoordStart.id());
        assert_eq!(tail[64], Special::LigandCoordEnd.id());
        for (k, &t) in tail[1..64].iter().enumerate() {
            assert_eq!(t, Special::AXES[k % 3].id());
        }
        let nums = &out.numbers[p.len()..];
        assert_eq!(nums[0], 1.0);
        assert_eq!(nums[64], 1.0);
        assert!(out.tokens.iter().zip(&out.numbers).all(|(&t, x)| x.is_finite() && (is_coord_id(t) || *x == 1.0)));
        assert_eq!(out, generate_coordinates(&w, &p, 21).unwrap());
        assert!(matches!(generate_coordinates(&w, &p, 0), Err(ModelError::NoAtoms)));
        assert!(matches!(generate_coordinates(&w, &prefix(), 1), Err(ModelError::BadPrefix)));
        assert!(matches!(generate_coordinates(&w, &p, 30), Err(ModelError::TooLong { .. })));
    }

    #[test]
    fn sampler_follows_distribution() {
        let logits = [0.0f64, (3.0f64).ln()];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ones = (0..20000).filter(|_| sample_index(&logits, 1.0, &mut rng) == 1).count();
        assert!((ones as f64 / 20000.0 - 0.75).abs() < 0.01);
        assert_eq!(sample_index(&[0.1f32, 0.5, 0.2], 0.0, &mut rng), 1);
    }
}
