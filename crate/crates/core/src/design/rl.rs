use std::collections::BTreeMap;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::oracle::{Oracle, OracleRequest, OracleScores};
use super::rewards::{reward_total, rl_loss};
use super::{DesignError, RLConfig};
use crate::chem::{add, centroid, parse_smiles, scale, sub, write_smiles, NeighborOrder, Vec3};
use crate::model::{generate_coordinates, generate_tokens, log_likelihood, softmax, ModelError, Weights};
use crate::seed::derive_seed;
use crate::seqcodec::{encode_pocket, ParallelSequence, Special, Vocabulary};
use crate::train::AdamW;
use crate::Scalar;

const CHUNK: usize = 4;

/// Pocket section plus `[LS]`, and the frame generated coordinates live in.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignPrompt {
    pub seq: ParallelSequence,
    pub center: Vec3,
    pub q: f64,
}

pub fn design_prompt(
    vocab: &Vocabulary,
    pocket_atoms: &[String],
    pocket_coords: &[Vec3],
    q: f64,
) -> Result<DesignPrompt, DesignError> {
    let center = centroid(pocket_coords).ok_or_else(|| DesignError::Config("pocket has no atoms".into()))?;
    let shifted: Vec<Vec3> = pocket_coords.iter().map(|&p| sub(p, center)).collect();
    let mut seq = encode_pocket(vocab, pocket_atoms, &shifted, q)?;
    seq.push_special(Special::LigandStart);
    Ok(DesignPrompt { seq, center, q })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignCandidate {
    pub smiles: String,
    /// Å, SMILES atom order; empty when invalid.
    pub coords: Vec<Vec3>,
    pub valid: bool,
    pub scores: Option<OracleScores>,
    pub reward: Option<f64>,
    pub agent_loglik: f64,
    pub pretrained_loglik: f64,
    #[serde(skip)]
    pub seq: ParallelSequence,
    /// Positions scored by the likelihoods: the sampled SMILES tokens and
    /// the closing `[LE]` when one was produced.
    #[serde(skip)]
    pub span: Range<usize>,
}

fn smiles_of(vocab: &Vocabulary, tokens: &[u32]) -> (String, bool) {
    let mut s = String::new();
    let mut ok = true;
    for &t in tokens {
        ok &= !vocab.is_special(t);
        s.push_str(vocab.token(t).unwrap_or("?"));
    }
    (s, ok)
}

fn sample_one<T: Scalar>(
    agent: &Weights<T>,
    prior: &Weights<T>,
    docking: &Weights<T>,
    vocab: &Vocabulary,
    prompt: &DesignPrompt,
    cfg: &RLConfig,
    seed: u64,
) -> Result<DesignCandidate, DesignError> {
    let le = Special::LigandEnd.id();
    let g = generate_tokens(agent, &prompt.seq, le, cfg.max_smiles_tokens + 1, cfg.temperature, seed)?;
    let start = prompt.seq.len();
    let body_end = if g.completed { g.seq.len() - 1 } else { g.seq.len() };
    let (smiles, clean) = smiles_of(vocab, &g.seq.tokens[start..body_end]);
    let span = start..g.seq.len();
    let (agent_loglik, pretrained_loglik) = if span.is_empty() {
        (0.0, 0.0)
    } else {
        (
            log_likelihood(agent, &g.seq, span.clone())?.as_f64(),
            log_likelihood(prior, &g.seq, span.clone())?.as_f64(),
        )
    };
    let mut c = DesignCandidate {
        smiles,
        coords: Vec::new(),
        valid: false,
        scores: None,
        reward: None,
        agent_loglik,
        pretrained_loglik,
        seq: g.seq.clone(),
        span,
    };
    if !(g.completed && clean && body_end > start) {
        return Ok(c);
    }
    let Ok(graph) = parse_smiles(&c.smiles) else { return Ok(c) };
    match generate_coordinates(docking, &g.seq, graph.atoms.len()) {
        Ok(full) => {
            let from = g.seq.len() + 1;
            c.coords = full.numbers[from..from + 3 * graph.atoms.len()]
                .chunks_exact(3)
                .map(|p| add(scale([p[0], p[1], p[2]], prompt.q), prompt.center))
                .collect();
            c.valid = true;
        }
        Err(ModelError::TooLong { .. }) => {}
        Err(e) => return Err(e.into()),
    }
    Ok(c)
}

/// SMILES from the agent, coordinates from the frozen docking weights.
/// Candidate `i` of `step` always uses the same seed.
pub fn sample_batch<T: Scalar>(
    agent: &Weights<T>,
    prior: &Weights<T>,
    docking: &Weights<T>,
    vocab: &Vocabulary,
    prompt: &DesignPrompt,
    cfg: &RLConfig,
    step: usize,
) -> Result<Vec<DesignCandidate>, DesignError> {
    (0..cfg.batch)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(cfg.seed, &[3, step as u64, i as u64]);
            sample_one(agent, prior, docking, vocab, prompt, cfg, seed)
        })
        .collect()
}

/// Scores valid candidates through `oracle`; invalid ones get reward 0 and
/// are never sent.
pub fn score_batch(cands: &mut [DesignCandidate], oracle: &dyn Oracle) -> Result<(), DesignError> {
    let requests: Vec<OracleRequest> = cands
        .iter()
        .enumerate()
        .filter(|(_, c)| c.valid)
        .map(|(i, c)| OracleRequest { index: i, smiles: c.smiles.clone(), coords: c.coords.clone() })
        .collect();
    let scores = oracle.score(&requests)?;
    if scores.len() != requests.len() {
        return Err(DesignError::Protocol {
            line: 0,
            reason: format!("expected {} scores, found {}", requests.len(), scores.len()),
        });
    }
    for c in cands.iter_mut().filter(|c| !c.valid) {
        c.reward = Some(0.0);
    }
    for (r, s) in requests.iter().zip(scores) {
        let c = &mut cands[r.index];
        c.reward = Some(reward_total(&s)?);
        c.scores = Some(s);
    }
    Ok(())
}

/// Mean loss over the batch and its gradient with respect to the agent.
pub fn rl_gradient<T: Scalar>(
    agent: &Weights<T>,
    cands: &[DesignCandidate],
    sigma: f64,
) -> Result<(f64, Vec<T>), DesignError> {
    let n = agent.params.len();
    let v = agent.config.vocab_size;
    let inv_b = 1.0 / cands.len().max(1) as f64;
    let parts: Vec<Result<(f64, Vec<T>), DesignError>> = cands
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grad = vec![T::zero(); n];
            let mut loss = 0.0;
            for c in chunk {
                let reward = c.reward.ok_or_else(|| DesignError::Config("candidate was not scored".into()))?;
                loss += rl_loss(c.pretrained_loglik, c.agent_loglik, reward, sigma);
                if c.span.is_empty() {
                    continue;
                }
                // dL/d log π_agent
                let coef = -2.0 * (c.pretrained_loglik + sigma * reward - c.agent_loglik) * inv_b;
                let nums: Vec<T> = c.seq.numbers.iter().map(|&x| T::of(x)).collect();
                let len = c.span.end;
                let session = agent.trace(&c.seq.tokens[..len], &nums[..len])?;
                let mut dlogits = vec![T::zero(); len * v];
                for t in c.span.clone() {
                    let p = softmax(session.logits_at(t - 1));
                    let row = &mut dlogits[(t - 1) * v..t * v];
                    for (g, pi) in row.iter_mut().zip(p) {
                        *g = T::of(-coef) * pi;
                    }
                    row[c.seq.tokens[t] as usize] += T::of(coef);
                }
                session.backward(&dlogits, &vec![T::zero(); len], &mut grad)?;
            }
            Ok((loss, grad))
        })
        .collect();
    let mut total = vec![T::zero(); n];
    let mut loss = 0.0;
    for p in parts {
        let (l, g) = p?;
        loss += l;
        total.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
    Ok((loss * inv_b, total))
}

/// Dedup key: the SMILES re-written from its graph in default order.
pub fn dedup_key(smiles: &str) -> Option<String> {
    let g = parse_smiles(smiles).ok()?;
    write_smiles(&g, 0, NeighborOrder::Default).ok().map(|w| w.smiles)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub smiles: String,
    pub coords: Vec<Vec3>,
    pub scores: OracleScores,
    pub reward: f64,
    pub step: usize,
}

/// Best-scoring entry per unique molecule.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Archive {
    entries: BTreeMap<String, ArchiveEntry>,
}

impl Archive {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &ArchiveEntry)> {
        self.entries.iter().map(|(k, e)| (k.as_str(), e))
    }

    /// Adds scored valid candidates; keeps the higher reward on collision.
    pub fn add(&mut self, cands: &[DesignCandidate], step: usize) {
        for c in cands.iter().filter(|c| c.valid) {
            let (Some(scores), Some(reward), Some(key)) = (c.scores, c.reward, dedup_key(&c.smiles)) else {
                continue;
            };
            let better = self.entries.get(&key).is_none_or(|e| reward > e.reward);
            if better {
                let entry = ArchiveEntry { smiles: c.smiles.clone(), coords: c.coords.clone(), scores, reward, step };
                self.entries.insert(key, entry);
            }
        }
    }

    /// Up to `k` unique molecules, best reward first (ties by key).
    pub fn top_k(&self, k: usize) -> Vec<ArchiveEntry> {
        let mut all: Vec<(&String, &ArchiveEntry)> = self.entries.iter().collect();
        all.sort_by(|a, b| b.1.reward.total_cmp(&a.1.reward).then_with(|| a.0.cmp(b.0)));
        all.into_iter().take(k).map(|(_, e)| e.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RlState<T: Scalar> {
    pub agent: Weights<T>,
    pub opt: AdamW<T>,
    pub step: usize,
    pub archive: Archive,
}

impl<T: Scalar> RlState<T> {
    pub fn new(agent: Weights<T>) -> Self {
        let opt = AdamW::new(agent.params.len());
        RlState { agent, opt, step: 0, archive: Archive::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RlStepLog {
    pub step: usize,
    pub mean_reward: f64,
    pub loss: f64,
    pub invalid: usize,
    pub unique: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RlReport {
    pub history: Vec<RlStepLog>,
}

/// One sample, score and update round. Returns the log and the scored batch.
pub fn rl_step<T: Scalar>(
    state: &mut RlState<T>,
    prior: &Weights<T>,
    docking: &Weights<T>,
    vocab: &Vocabulary,
    prompt: &DesignPrompt,
    oracle: &dyn Oracle,
    cfg: &RLConfig,
) -> Result<(RlStepLog, Vec<DesignCandidate>), DesignError> {
    let step = state.step;
    let mut cands = sample_batch(&state.agent, prior, docking, vocab, prompt, cfg, step)?;
    score_batch(&mut cands, oracle)?;
    let (loss, grad) = rl_gradient(&state.agent, &cands, cfg.sigma)?;
    state.opt.step(&mut state.agent.params, &grad, cfg.lr, 0.0, &state.agent.layout)?;
    state.archive.add(&cands, step);
    state.step += 1;
    let mean_reward = cands.iter().map(|c| c.reward.unwrap_or(0.0)).sum::<f64>() / cands.len().max(1) as f64;
    let invalid = cands.iter().filter(|c| !c.valid).count();
    let log = RlStepLog { step, mean_reward, loss, invalid, unique: state.archive.len() };
    Ok((log, cands))
}

/// Runs until `cfg.steps` (or `stop_at`) updates are done. The docking
/// weights are checked to be bit-identical afterwards.
#[allow(clippy::too_many_arguments)]
pub fn rl_run<T: Scalar>(
    state: &mut RlState<T>,
    prior: &Weights<T>,
    docking: &Weights<T>,
    vocab: &Vocabulary,
    prompt: &DesignPrompt,
    oracle: &dyn Oracle,
    cfg: &RLConfig,
    stop_at: Option<usize>,
) -> Result<RlReport, DesignError> {
    cfg.validate()?;
    for (name, w) in [("agent", &state.agent), ("prior", prior), ("docking", docking)] {
        if w.config.vocab_size != vocab.len() {
            return Err(DesignError::Config(format!("{name} weights do not match the vocabulary")));
        }
    }
    let frozen = docking.hash();
    let end = stop_at.map_or(cfg.steps, |s| s.min(cfg.steps));
    let mut report = RlReport::default();
    while state.step < end {
        let (log, _) = rl_step(state, prior, docking, vocab, prompt, oracle, cfg)?;
        log::info!(
            "rl step {} reward {:.4} loss {:.3} invalid {} unique {}",
            log.step,
            log.mean_reward,
            log.loss,
            log.invalid,
            log.unique
        );
        report.history.push(log);
    }
    if docking.hash() != frozen {
        return Err(DesignError::FrozenWeightsChanged);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::ComplexRecord;
    use crate::design::MockOracle;
    use crate::model::ModelConfig;

    fn setup() -> (Vocabulary, Weights<f64>, DesignPrompt) {
        let r = ComplexRecord::new(vec!["N".into(), "CA".into()], vec![[0.0; 3]; 2], "c1ccncc1O", vec![[0.0; 3]; 7]);
        let v = Vocabulary::build([&r]).unwrap();
        let c = ModelConfig { n_layers: 1, n_heads: 2, d_model: 16, max_len: 64, vocab_size: v.len(), dropout: 0.0 };
        let w = Weights::init(&c, 9).unwrap();
        let p = design_prompt(&v, &r.pocket_atoms, &[[1.0, 2.0, 3.0], [3.0, 2.0, 1.0]], 5.0).unwrap();
        (v, w, p)
    }

    fn cfg() -> RLConfig {
        RLConfig { batch: 12, max_smiles_tokens: 10, ..RLConfig::default() }
    }

    #[test]
    fn batch_is_deterministic_and_consistent() {
        let (v, w, p) = setup();
        let a = sample_batch(&w, &w, &w, &v, &p, &cfg(), 0).unwrap();
        let b = sample_batch(&w, &w, &w, &v, &p, &cfg(), 0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_batch(&w, &w, &w, &v, &p, &cfg(), 1).unwrap());
        for c in &a {
            assert_eq!(c.agent_loglik, c.pretrained_loglik);
            assert!(c.agent_loglik <= 0.0);
            if c.valid {
                assert_eq!(c.coords.len(), parse_smiles(&c.smiles).unwrap().atoms.len());
            }
        }
    }

    #[test]
    fn invalid_samples_get_zero_and_skip_the_oracle() {
        struct Counting(std::sync::Mutex<usize>);
        impl Oracle for Counting {
            fn score(&self, r: &[OracleRequest]) -> Result<Vec<OracleScores>, DesignError> {
                *self.0.lock().unwrap() += r.len();
                assert!(r.iter().all(|q| parse_smiles(&q.smiles).is_ok()));
                MockOracle.score(r)
            }
        }
        let (v, w, p) = setup();
        let mut cands = sample_batch(&w, &w, &w, &v, &p, &RLConfig { batch: 40, ..cfg() }, 0).unwrap();
        let n_valid = cands.iter().filter(|c| c.valid).count();
        assert!(n_valid < cands.len(), "random weights should produce some invalid SMILES");
        let o = Counting(std::sync::Mutex::new(0));
        score_batch(&mut cands, &o).unwrap();
        assert_eq!(*o.0.lock().unwrap(), n_valid);
        for c in &cands {
            let r = c.reward.unwrap();
            assert!((0.0..=1.0).contains(&r));
            if !c.valid {
                assert_eq!(r, 0.0);
                assert!(c.scores.is_none());
            }
        }
        let mut empty: Vec<DesignCandidate> = Vec::new();
        score_batch(&mut empty, &MockOracle).unwrap();
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (v, w, p) = setup();
        let c = RLConfig { batch: 3, sigma: 2.0, ..cfg() };
        let mut cands = sample_batch(&w, &w, &w, &v, &p, &c, 0).unwrap();
        score_batch(&mut cands, &MockOracle).unwrap();
        let (_, grad) = rl_gradient(&w, &cands, c.sigma).unwrap();
        let loss_at = |w: &Weights<f64>| {
            cands
                .iter()
                .map(|k| {
                    let a = if k.span.is_empty() { 0.0 } else { log_likelihood(w, &k.seq, k.span.clone()).unwrap() };
                    rl_loss(k.pretrained_loglik, a, k.reward.unwrap(), c.sigma)
                })
                .sum::<f64>()
                / cands.len() as f64
        };
        for i in [w.layout.head_tok + 5, w.layout.wte + 40, w.layout.blocks[0].fc_w + 17] {
            let h = 1e-5;
            let mut a = w.clone();
            a.params[i] += h;
            let mut b = w.clone();
            b.params[i] -= h;
            let fd = (loss_at(&a) - loss_at(&b)) / (2.0 * h);
            assert!((fd - grad[i]).abs() <= 1e-6 * (1.0 + fd.abs()), "{i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn archive_dedups() {
        let mk = |s: &str, r: f64| DesignCandidate {
            smiles: s.into(),
            coords: vec![],
            valid: true,
            scores: Some(OracleScores { vina_dock: -1.0, qed: 0.5, sa: 0.7, vina_score: None }),
            reward: Some(r),
            agent_loglik: 0.0,
            pretrained_loglik: 0.0,
            seq: ParallelSequence::new(),
            span: 0..0,
        };
        let mut a = Archive::default();
        a.add(&[mk("CCO", 0.2), mk("OCC", 0.1), mk("CCO", 0.5), mk("CN", 0.3)], 0);
        // "OCC" re-writes from atom 0 as itself, so it is a separate key here
        let keys: Vec<&str> = a.entries().map(|(k, _)| k).collect();
        assert_eq!(keys.len(), 3);
        let top = a.top_k(2);
        assert_eq!(top[0].smiles, "CCO");
        assert_eq!(top[0].reward, 0.5);
        assert_eq!(top[1].smiles, "CN");
        assert_eq!(a.top_k(100).len(), 3);
    }
}
