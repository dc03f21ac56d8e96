use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::augment::{augment_complex, Augment};
use super::batch::{accumulated_gradient, Objective};
use super::loss::LossBreakdown;
use super::optim::{clip_grad_norm, AdamW};
use super::{lr_at, TrainConfig, TrainError};
use crate::chem::{normalize_complex, Centering, ComplexRecord};
use crate::model::{save_checkpoint, Checkpoint, Weights};
use crate::seed::derive_seed;
use crate::seqcodec::{encode_complex, ParallelSequence, Vocabulary};
use crate::Scalar;

const METRICS_HEADER: &str = "step,lr,ce,mse,total";

/// Weights, optimizer moments and the number of completed steps.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T: Scalar> {
    pub weights: Weights<T>,
    pub opt: AdamW<T>,
    pub step: usize,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(weights: Weights<T>) -> Self {
        let opt = AdamW::new(weights.params.len());
        TrainState { weights, opt, step: 0 }
    }

    /// Restores optimizer state and step count when the checkpoint carries
    /// them; otherwise starts a fresh optimizer on the stored weights.
    pub fn from_checkpoint(ck: &Checkpoint<T>) -> Result<Self, TrainError> {
        let mut st = TrainState::new(ck.weights.clone());
        if let (Some(m), Some(v)) = (ck.extra("adam.m"), ck.extra("adam.v")) {
            if m.len() != st.opt.m.len() || v.len() != st.opt.v.len() {
                return Err(TrainError::Shape("optimizer moments do not match the weights".into()));
            }
            st.opt.m = m.to_vec();
            st.opt.v = v.to_vec();
            st.opt.t = ck.meta["adam_t"].as_u64().unwrap_or(0);
            st.step = ck.meta["step"].as_u64().unwrap_or(0) as usize;
        }
        Ok(st)
    }

    pub fn to_checkpoint(&self, vocab: &Vocabulary, kind: &str, cfg: &TrainConfig) -> Checkpoint<T> {
        let mut ck = Checkpoint::new(self.weights.clone(), vocab.clone());
        ck.extra.push(("adam.m".into(), self.opt.m.clone()));
        ck.extra.push(("adam.v".into(), self.opt.v.clone()));
        ck.meta = serde_json::json!({
            "kind": kind,
            "step": self.step,
            "adam_t": self.opt.t,
            "train": cfg,
        });
        ck
    }
}

/// Where a run writes its checkpoint and metrics log.
#[derive(Debug, Clone)]
pub struct RunFiles {
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub files: Option<RunFiles>,
    /// Stop (and save) once this many steps are complete, leaving the
    /// schedule untouched so a later run can resume.
    pub stop_at: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepLog {
    pub step: usize,
    pub lr: f64,
    pub loss: LossBreakdown,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainReport {
    pub history: Vec<StepLog>,
    /// Samples dropped because they could not be prepared.
    pub skipped: usize,
}

pub fn steps_per_epoch(n_samples: usize, effective_batch: usize) -> usize {
    n_samples.div_ceil(effective_batch.max(1))
}

/// Sample order of one epoch.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0, epoch as u64])));
    order
}

/// Keeps the header and rows for steps before `resume_step`.
fn open_metrics(path: &Path, resume_step: usize) -> Result<fs::File, TrainError> {
    let mut kept = vec![METRICS_HEADER.to_string()];
    if resume_step > 0 && path.exists() {
        for line in BufReader::new(fs::File::open(path)?).lines().skip(1) {
            let line = line?;
            match line.split(',').next().and_then(|s| s.parse::<usize>().ok()) {
                Some(s) if s < resume_step => kept.push(line),
                _ => {}
            }
        }
    }
    let mut f = fs::File::create(path)?;
    for l in &kept {
        writeln!(f, "{l}")?;
    }
    Ok(f)
}

/// Shared optimizer loop. `prepare(step, epoch, indices)` returns the
/// sequences of one step and how many samples it had to drop.
#[allow(clippy::too_many_arguments)]
fn run_loop<T: Scalar>(
    state: &mut TrainState<T>,
    vocab: &Vocabulary,
    cfg: &TrainConfig,
    n_samples: usize,
    obj: Objective<'_>,
    kind: &str,
    opts: &RunOptions,
    mut prepare: impl FnMut(usize, usize, &[usize]) -> Result<(Vec<ParallelSequence>, usize), TrainError>,
) -> Result<TrainReport, TrainError> {
    cfg.validate()?;
    if n_samples == 0 {
        return Err(TrainError::EmptyCorpus);
    }
    if state.weights.config.vocab_size != vocab.len() {
        return Err(TrainError::Shape("vocabulary does not match the model".into()));
    }
    let batch = cfg.effective_batch();
    let spe = steps_per_epoch(n_samples, batch);
    let files = opts.files.as_ref();
    let end = opts.stop_at.map_or(cfg.total_steps, |s| s.min(cfg.total_steps));
    let mut metrics = files.map(|f| open_metrics(&f.metrics, state.step)).transpose()?;
    let mut orders: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut report = TrainReport::default();
    let save = |st: &TrainState<T>| -> Result<(), TrainError> {
        if let Some(f) = files {
            save_checkpoint(&f.checkpoint, &st.to_checkpoint(vocab, kind, cfg))?;
        }
        Ok(())
    };

    while state.step < end {
        let step = state.step;
        let (epoch, within) = (step / spe, step % spe);
        orders.retain(|&e, _| e >= epoch);
        let order = orders.entry(epoch).or_insert_with(|| epoch_order(cfg.seed, epoch, n_samples));
        let idx = &order[within * batch..((within + 1) * batch).min(n_samples)];
        if within == 0 {
            log::debug!("epoch {epoch} order {:?}", &order[..order.len().min(16)]);
        }
        let (seqs, skipped) = prepare(step, epoch, idx)?;
        report.skipped += skipped;
        if seqs.is_empty() {
            return Err(TrainError::EmptyBatch { step });
        }
        let refs: Vec<&ParallelSequence> = seqs.iter().collect();
        let seeds: Vec<u64> = (0..seqs.len()).map(|j| derive_seed(cfg.seed, &[1, step as u64, j as u64])).collect();
        let (loss, mut grad) = accumulated_gradient(&state.weights, &refs, &seeds, cfg.micro_batch, obj)?;
        if !loss.total.is_finite() {
            return Err(TrainError::NonFiniteLoss);
        }
        let grad_norm = match cfg.clip_norm {
            Some(c) => clip_grad_norm(&mut grad, c),
            None => grad.iter().map(|g| g.as_f64() * g.as_f64()).sum::<f64>().sqrt(),
        };
        let lr = lr_at(step, cfg);
        state.opt.step(&mut state.weights.params, &grad, lr, cfg.weight_decay, &state.weights.layout)?;
        state.step += 1;
        let entry = StepLog { step, lr, loss, grad_norm };
        log::info!("{kind} step {step} lr {lr:.3e} loss {:.5} (ce {:.5} mse {:.5})", loss.total, loss.ce, loss.mse);
        if let Some(m) = metrics.as_mut() {
            writeln!(m, "{},{},{},{},{}", step, lr, loss.ce, loss.mse, loss.total)?;
        }
        report.history.push(entry);
        if cfg.checkpoint_every > 0 && state.step.is_multiple_of(cfg.checkpoint_every) && state.step < end {
            save(state)?;
        }
    }
    save(state)?;
    Ok(report)
}

/// Composite-loss training on already encoded sequences.
pub fn train_pretrain<T: Scalar>(
    state: &mut TrainState<T>,
    vocab: &Vocabulary,
    corpus: &[ParallelSequence],
    cfg: &TrainConfig,
    opts: &RunOptions,
) -> Result<TrainReport, TrainError> {
    let obj = Objective::Pretrain { alpha: cfg.alpha };
    run_loop(state, vocab, cfg, corpus.len(), obj, "pretrain", opts, |_, _, idx| {
        Ok((idx.iter().map(|&i| corpus[i].clone()).collect(), 0))
    })
}

/// Augments, pocket-centres, normalizes and encodes one complex.
pub fn docking_sample(
    vocab: &Vocabulary,
    r: &ComplexRecord,
    aug: Augment,
    q: f64,
    max_len: usize,
    seed: u64,
) -> Result<ParallelSequence, TrainError> {
    let a = augment_complex(r, aug, seed)?;
    let n = normalize_complex(&a, q, Centering::Pocket)?;
    Ok(encode_complex(vocab, &n, q, max_len)?)
}

/// Ligand-coordinate fine-tuning; every sample is re-augmented each epoch.
pub fn train_docking<T: Scalar>(
    state: &mut TrainState<T>,
    vocab: &Vocabulary,
    complexes: &[ComplexRecord],
    cfg: &TrainConfig,
    aug: Augment,
    q: f64,
    opts: &RunOptions,
) -> Result<TrainReport, TrainError> {
    let obj = Objective::Docking { vocab };
    let max_len = state.weights.config.max_len;
    run_loop(state, vocab, cfg, complexes.len(), obj, "docking", opts, |step, epoch, idx| {
        let mut seqs = Vec::with_capacity(idx.len());
        let mut skipped = 0;
        for &i in idx {
            let seed = derive_seed(cfg.seed, &[2, epoch as u64, i as u64]);
            match docking_sample(vocab, &complexes[i], aug, q, max_len, seed) {
                Ok(s) => seqs.push(s),
                Err(e) => {
                    log::warn!("step {step}: skipping complex {i}: {e}");
                    skipped += 1;
                }
            }
        }
        Ok((seqs, skipped))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{load_checkpoint, ModelConfig};
    use crate::seqcodec::encode_record;
    use crate::train::Schedule;

    fn corpus() -> (Vocabulary, Vec<ComplexRecord>) {
        let recs: Vec<ComplexRecord> = (0..6)
            .map(|k| {
                let o = k as f64;
                ComplexRecord::new(
                    vec!["N".into(), "CA".into()],
                    vec![[o, 0.0, 1.0], [o + 1.0, 0.5, 1.0]],
                    if k % 2 == 0 { "CO" } else { "CCN" },
                    (0..2 + k % 2).map(|j| [o + j as f64, 1.0, 2.0]).collect(),
                )
            })
            .collect();
        (Vocabulary::build(&recs).unwrap(), recs)
    }

    fn tiny(v: &Vocabulary) -> Weights<f64> {
        let c = ModelConfig { n_layers: 1, n_heads: 2, d_model: 16, max_len: 32, vocab_size: v.len(), dropout: 0.0 };
        Weights::init(&c, 1).unwrap()
    }

    fn cfg(steps: usize) -> TrainConfig {
        TrainConfig {
            micro_batch: 2,
            accum_steps: 2,
            max_lr: 1e-2,
            warmup_frac: 0.1,
            total_steps: steps,
            weight_decay: 0.0,
            alpha: 1.0,
            seed: 3,
            schedule: Schedule::WarmupCosine,
            clip_norm: Some(1.0),
            checkpoint_every: 2,
        }
    }

    #[test]
    fn epoch_arithmetic() {
        assert_eq!(steps_per_epoch(10, 4), 3);
        assert_eq!(steps_per_epoch(8, 4), 2);
        let o = epoch_order(1, 0, 10);
        let mut s = o.clone();
        s.sort();
        assert_eq!(s, (0..10).collect::<Vec<_>>());
        assert_eq!(o, epoch_order(1, 0, 10));
        assert_ne!(o, epoch_order(1, 1, 10));
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let (v, recs) = corpus();
        let seqs: Vec<_> = recs.iter().map(|r| encode_record(&v, r, 5.0, 32).unwrap()).collect();
        let dir = tempfile::tempdir().unwrap();
        let files = RunFiles { checkpoint: dir.path().join("a.ckpt"), metrics: dir.path().join("a.csv") };
        let c = cfg(5);

        let mut full = TrainState::new(tiny(&v));
        let rep = train_pretrain(&mut full, &v, &seqs, &c, &RunOptions::default()).unwrap();
        assert_eq!(rep.history.len(), 5);
        assert_eq!(rep.history[0].lr, 0.0);

        let mut st = TrainState::new(tiny(&v));
        let first = RunOptions { files: Some(files.clone()), stop_at: Some(3) };
        train_pretrain(&mut st, &v, &seqs, &c, &first).unwrap();
        assert_eq!(st.step, 3);
        let saved = dir.path().join("at3.ckpt");
        fs::copy(&files.checkpoint, &saved).unwrap();

        for _ in 0..2 {
            // the second pass re-resumes over a log that already has rows 3 and 4
            let ck: Checkpoint<f64> = load_checkpoint(&saved).unwrap();
            assert_eq!(ck.meta["step"], 3);
            let mut resumed = TrainState::from_checkpoint(&ck).unwrap();
            assert_eq!(resumed, st);
            let rest = RunOptions { files: Some(files.clone()), stop_at: None };
            let rep = train_pretrain(&mut resumed, &v, &seqs, &c, &rest).unwrap();
            assert_eq!(rep.history.len(), 2);
            assert_eq!(resumed.weights.params, full.weights.params);
            let csv = fs::read_to_string(&files.metrics).unwrap();
            let steps: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
            assert_eq!(steps, ["0", "1", "2", "3", "4"]);
            assert!(csv.starts_with(METRICS_HEADER));
        }
        let done: Checkpoint<f64> = load_checkpoint(&files.checkpoint).unwrap();
        assert_eq!(TrainState::from_checkpoint(&done).unwrap(), full);
    }

    #[test]
    fn docking_run_skips_bad_samples() {
        let (v, mut recs) = corpus();
        // SMILES and coordinates disagree: encoding fails
        recs[1].ligand_coords.pop();
        let mut st = TrainState::new(tiny(&v));
        let c = TrainConfig { micro_batch: 3, accum_steps: 2, ..cfg(3) };
        let rep = train_docking(&mut st, &v, &recs, &c, Augment::ALL, 5.0, &RunOptions::default()).unwrap();
        assert_eq!(rep.skipped, 3);
        assert!(rep.history.iter().all(|h| h.loss.ce == 0.0 && h.loss.mse > 0.0));
    }
}
