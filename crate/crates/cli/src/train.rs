use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use pockformer_core::chem::ComplexRecord;
use pockformer_core::model::{load_checkpoint, Checkpoint, Weights};
use pockformer_core::seqcodec::{encode_record, Vocabulary};
use pockformer_core::train::{
    steps_per_epoch, train_docking, train_pretrain, Augment, RunFiles, RunOptions, TrainConfig, TrainError,
    TrainReport, TrainState,
};
use pockformer_core::Scalar;

use crate::config::{Precision, RunConfig};
use crate::error::{invalid, Result};
use crate::inputs::{ensure_dir, range_filter, read_all, read_vocab};

pub const CHECKPOINT: &str = "model.ckpt";
pub const METRICS: &str = "metrics.csv";
pub const VOCAB: &str = "vocab.json";

/// Flags shared by both training commands; each overrides the config.
#[derive(Args, Debug)]
pub struct TrainFlags {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset files (JSON Lines).
    #[arg(long, required = true, num_args = 1..)]
    pub data: Vec<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Continue from the checkpoint in `--out-dir`.
    #[arg(long)]
    pub resume: bool,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub micro_batch: Option<usize>,
    #[arg(long)]
    pub accum_steps: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Save and stop after this many completed steps.
    #[arg(long)]
    pub stop_at: Option<usize>,
}

#[derive(Args, Debug)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Use this vocabulary instead of building one from the data.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FinetuneArgs {
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Pre-trained checkpoint to start from.
    #[arg(long, required_unless_present = "resume")]
    pub init: Option<PathBuf>,
    /// Disable rotation and SMILES randomization.
    #[arg(long)]
    pub no_augment: bool,
}

fn apply_flags(t: &mut TrainConfig, epochs: &mut Option<usize>, f: &TrainFlags, seed: Option<u64>) {
    if let Some(s) = f.steps {
        t.total_steps = s;
        *epochs = None;
    }
    if f.epochs.is_some() {
        *epochs = f.epochs;
    }
    if let Some(v) = f.lr {
        t.max_lr = v;
    }
    if let Some(v) = f.micro_batch {
        t.micro_batch = v;
    }
    if let Some(v) = f.accum_steps {
        t.accum_steps = v;
    }
    if let Some(v) = f.checkpoint_every {
        t.checkpoint_every = v;
    }
    if let Some(s) = seed {
        t.seed = s;
    }
}

fn set_total(t: &mut TrainConfig, epochs: Option<usize>, n: usize) {
    if let Some(e) = epochs {
        t.total_steps = e * steps_per_epoch(n, t.effective_batch());
    }
}

fn classify(e: TrainError) -> anyhow::Error {
    match e {
        TrainError::Config(_) | TrainError::EmptyCorpus => invalid(e),
        e => e.into(),
    }
}

fn run_files(dir: &Path) -> RunFiles {
    RunFiles { checkpoint: dir.join(CHECKPOINT), metrics: dir.join(METRICS) }
}

/// Resumed state from `dir`, checked against the vocabulary and config.
fn resume_state<T: Scalar>(dir: &Path, vocab: &Vocabulary, cfg: &TrainConfig, kind: &str) -> Result<TrainState<T>> {
    let path = dir.join(CHECKPOINT);
    let ck: Checkpoint<T> = load_checkpoint(&path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    ck.require_vocab(vocab).map_err(invalid)?;
    if ck.meta["kind"] != kind {
        return Err(invalid(format!("{} is not a {kind} checkpoint", path.display())));
    }
    if ck.meta["train"] != serde_json::to_value(cfg)? {
        return Err(invalid("training config differs from the one stored in the checkpoint"));
    }
    TrainState::from_checkpoint(&ck).map_err(classify)
}

fn summarize(report: &TrainReport, state_step: usize) {
    if let Some(last) = report.history.last() {
        log::info!("step {state_step}: loss {:.5} (ce {:.5}, mse {:.5})", last.loss.total, last.loss.ce, last.loss.mse);
    }
    if report.skipped > 0 {
        log::warn!("{} samples skipped", report.skipped);
    }
}

/// Pocket-only and complex records repeated by the configured factors.
fn replicate(records: Vec<ComplexRecord>, pocket_copies: usize, complex_copies: usize) -> Vec<ComplexRecord> {
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let k = match (r.has_pocket(), r.has_ligand()) {
            (true, false) => pocket_copies,
            (true, true) => complex_copies,
            _ => 1,
        };
        out.extend(std::iter::repeat_n(r, k));
    }
    out
}

pub fn pretrain(args: &PretrainArgs, seed: Option<u64>) -> Result<()> {
    let f = &args.flags;
    let mut cfg = RunConfig::load(f.config.as_deref())?;
    let p = &mut cfg.pretrain;
    apply_flags(&mut p.train, &mut p.epochs, f, seed);
    cfg.validate()?;
    let records = range_filter(read_all(&f.data)?, cfg.range_limit);
    let records = replicate(records, cfg.pretrain.pocket_copies, cfg.pretrain.complex_copies);
    let vocab = match (&args.vocab, f.resume) {
        (Some(v), _) => read_vocab(v)?,
        (None, true) => read_vocab(&f.out_dir.join(VOCAB))?,
        (None, false) => Vocabulary::build(&records).map_err(invalid)?,
    };
    let max_len = cfg.model.max_len;
    let mut seqs = Vec::with_capacity(records.len());
    let mut dropped = 0;
    for (i, r) in records.iter().enumerate() {
        match encode_record(&vocab, r, cfg.q, max_len) {
            Ok(s) => seqs.push(s),
            Err(e) => {
                log::warn!("record {}: {e}", i + 1);
                dropped += 1;
            }
        }
    }
    if dropped > 0 {
        log::warn!("{dropped} records could not be encoded");
    }
    if seqs.is_empty() {
        return Err(invalid("no usable training sequences"));
    }
    set_total(&mut cfg.pretrain.train, cfg.pretrain.epochs, seqs.len());
    let train = cfg.pretrain.train.clone();
    train.validate().map_err(classify)?;
    ensure_dir(&f.out_dir)?;
    fs::write(f.out_dir.join(VOCAB), vocab.to_json())?;
    let opts = RunOptions { files: Some(run_files(&f.out_dir)), stop_at: f.stop_at };

    fn go<T: Scalar>(cfg: &RunConfig, train: &TrainConfig, vocab: &Vocabulary, seqs: &[pockformer_core::seqcodec::ParallelSequence], f: &TrainFlags, opts: &RunOptions) -> Result<()> {
        let mut state = if f.resume {
            resume_state::<T>(&f.out_dir, vocab, train, "pretrain")?
        } else {
            let c = cfg.model.config(vocab.len());
            TrainState::new(Weights::<T>::init(&c, train.seed).map_err(invalid)?)
        };
        log::info!(
            "pretraining {} parameters on {} sequences for {} steps",
            state.weights.params.len(),
            seqs.len(),
            train.total_steps
        );
        let report = train_pretrain(&mut state, vocab, seqs, train, opts).map_err(classify)?;
        summarize(&report, state.step);
        Ok(())
    }
    match cfg.precision {
        Precision::F32 => go::<f32>(&cfg, &train, &vocab, &seqs, f, &opts),
        Precision::F64 => go::<f64>(&cfg, &train, &vocab, &seqs, f, &opts),
    }
}

pub fn finetune_dock(args: &FinetuneArgs, seed: Option<u64>) -> Result<()> {
    let f = &args.flags;
    let mut cfg = RunConfig::load(f.config.as_deref())?;
    let d = &mut cfg.finetune_dock;
    apply_flags(&mut d.train, &mut d.epochs, f, seed);
    if args.no_augment {
        d.augment = Augment::NONE;
    }
    cfg.validate()?;
    let records: Vec<_> = range_filter(read_all(&f.data)?, cfg.range_limit)
        .into_iter()
        .filter(|r| r.has_pocket() && r.has_ligand())
        .collect();
    if records.is_empty() {
        return Err(invalid("no complexes with both a pocket and a ligand"));
    }
    set_total(&mut cfg.finetune_dock.train, cfg.finetune_dock.epochs, records.len());
    let train = cfg.finetune_dock.train.clone();
    train.validate().map_err(classify)?;
    ensure_dir(&f.out_dir)?;
    let opts = RunOptions { files: Some(run_files(&f.out_dir)), stop_at: f.stop_at };

    fn go<T: Scalar>(cfg: &RunConfig, train: &TrainConfig, records: &[ComplexRecord], args: &FinetuneArgs, opts: &RunOptions) -> Result<()> {
        let f = &args.flags;
        let (vocab, mut state) = if f.resume {
            let vocab = read_vocab(&f.out_dir.join(VOCAB))?;
            let st = resume_state::<T>(&f.out_dir, &vocab, train, "docking")?;
            (vocab, st)
        } else {
            let init = args.init.as_ref().expect("clap requires --init without --resume");
            let ck: Checkpoint<T> = load_checkpoint(init).map_err(|e| invalid(format!("{}: {e}", init.display())))?;
            (ck.vocab, TrainState::new(ck.weights))
        };
        fs::write(f.out_dir.join(VOCAB), vocab.to_json())?;
        log::info!("fine-tuning on {} complexes for {} steps", records.len(), train.total_steps);
        let report = train_docking(&mut state, &vocab, records, train, cfg.finetune_dock.augment, cfg.q, opts)
            .map_err(classify)?;
        summarize(&report, state.step);
        Ok(())
    }
    match cfg.precision {
        Precision::F32 => go::<f32>(&cfg, &train, &records, args, &opts),
        Precision::F64 => go::<f64>(&cfg, &train, &records, args, &opts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epochs_set_total_steps() {
        let mut t = TrainConfig::docking_default(1);
        set_total(&mut t, Some(3), 300);
        assert_eq!(t.total_steps, 3 * 3);
        set_total(&mut t, None, 10);
        assert_eq!(t.total_steps, 9);
    }

    #[test]
    fn replication_counts() {
        let p = ComplexRecord::new(vec!["N".into()], vec![[0.0; 3]], "", vec![]);
        let c = ComplexRecord::new(vec!["N".into()], vec![[0.0; 3]], "C", vec![[1.0; 3]]);
        let l = ComplexRecord::new(vec![], vec![], "C", vec![[1.0; 3]]);
        assert_eq!(replicate(vec![p, c, l], 5, 20).len(), 26);
    }
}
