use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use pockformer_core::design::{
    design_prompt, rl_run, Archive, CommandOracle, DesignError, MockOracle, Oracle, RLConfig, RlState,
};
use pockformer_core::model::{load_checkpoint, save_checkpoint, Checkpoint, Weights};
use pockformer_core::seqcodec::Vocabulary;
use pockformer_core::Scalar;

use crate::config::{OracleSection, Precision, RunConfig};
use crate::error::{invalid, Result};
use crate::inputs::{ensure_dir, read_pocket};

pub const AGENT: &str = "agent.ckpt";
pub const METRICS: &str = "metrics.csv";
pub const TOP_K: &str = "top_k.jsonl";
const METRICS_HEADER: &str = "step,mean_reward,loss,invalid,unique";

#[derive(Args, Debug)]
pub struct DesignArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Docking checkpoint; its weights generate coordinates and stay frozen.
    #[arg(long)]
    pub docking: PathBuf,
    /// Pre-trained checkpoint used as prior and starting agent (default:
    /// the docking checkpoint).
    #[arg(long)]
    pub prior: Option<PathBuf>,
    /// Pocket as a PDB file, or a dataset file with `--record`.
    #[arg(long)]
    pub pocket: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub record: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Score with the built-in mock oracle.
    #[arg(long, conflicts_with = "oracle")]
    pub mock_oracle: bool,
    /// External scoring program, run as `PROGRAM ARGS... REQUEST RESPONSE`.
    #[arg(long)]
    pub oracle: Option<String>,
    #[arg(long = "oracle-arg", allow_hyphen_values = true)]
    pub oracle_args: Vec<String>,
    /// Concurrent oracle invocations per batch.
    #[arg(long)]
    pub shards: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub max_smiles_tokens: Option<usize>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Continue from the agent checkpoint in `--out-dir`.
    #[arg(long)]
    pub resume: bool,
    /// Save and stop after this many completed steps.
    #[arg(long)]
    pub stop_at: Option<usize>,
}

fn apply_flags(cfg: &mut RunConfig, a: &DesignArgs, seed: Option<u64>) {
    let d = &mut cfg.design;
    let set = |slot: &mut usize, v: Option<usize>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut d.rl.steps, a.steps);
    set(&mut d.rl.batch, a.batch);
    set(&mut d.rl.max_smiles_tokens, a.max_smiles_tokens);
    set(&mut d.rl.top_k, a.top_k);
    set(&mut d.checkpoint_every, a.checkpoint_every);
    if let Some(v) = a.lr {
        d.rl.lr = v;
    }
    if let Some(s) = seed {
        d.rl.seed = s;
    }
    if let Some(p) = &a.oracle {
        d.oracle = Some(OracleSection { program: p.clone(), args: a.oracle_args.clone(), shards: 1 });
    }
    if let (Some(o), Some(s)) = (d.oracle.as_mut(), a.shards) {
        o.shards = s;
    }
}

fn classify(e: DesignError) -> anyhow::Error {
    match e {
        DesignError::Config(_) | DesignError::Codec(_) | DesignError::Smiles(_) => invalid(e),
        e => e.into(),
    }
}

fn load<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    load_checkpoint(path).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn save_agent<T: Scalar>(dir: &Path, st: &RlState<T>, vocab: &Vocabulary, rl: &RLConfig, docking: &str) -> Result<()> {
    let mut ck = Checkpoint::new(st.agent.clone(), vocab.clone());
    ck.extra.push(("adam.m".into(), st.opt.m.clone()));
    ck.extra.push(("adam.v".into(), st.opt.v.clone()));
    ck.meta = serde_json::json!({
        "kind": "design",
        "step": st.step,
        "adam_t": st.opt.t,
        "rl": rl,
        "docking": docking,
        "archive": st.archive,
    });
    save_checkpoint(&dir.join(AGENT), &ck)?;
    Ok(())
}

fn resume_agent<T: Scalar>(dir: &Path, vocab: &Vocabulary, rl: &RLConfig, docking: &str) -> Result<RlState<T>> {
    let ck: Checkpoint<T> = load(&dir.join(AGENT))?;
    ck.require_vocab(vocab).map_err(invalid)?;
    if ck.meta["kind"] != "design" {
        return Err(invalid("agent checkpoint is not from a design run"));
    }
    if ck.meta["rl"] != serde_json::to_value(rl)? {
        return Err(invalid("design config differs from the one stored in the agent checkpoint"));
    }
    if ck.meta["docking"] != docking {
        return Err(invalid("docking weights differ from the ones the run started with"));
    }
    let mut st = RlState::new(ck.weights.clone());
    let (Some(m), Some(v)) = (ck.extra("adam.m"), ck.extra("adam.v")) else {
        return Err(invalid("agent checkpoint has no optimizer state"));
    };
    st.opt.m = m.to_vec();
    st.opt.v = v.to_vec();
    st.opt.t = ck.meta["adam_t"].as_u64().unwrap_or(0);
    st.step = ck.meta["step"].as_u64().unwrap_or(0) as usize;
    st.archive = serde_json::from_value::<Archive>(ck.meta["archive"].clone())?;
    Ok(st)
}

/// Metrics file holding the header and rows for steps before `step`.
fn open_metrics(path: &Path, step: usize) -> Result<File> {
    let mut kept = vec![METRICS_HEADER.to_string()];
    if step > 0 && path.exists() {
        for line in BufReader::new(File::open(path)?).lines().skip(1) {
            let line = line?;
            if line.split(',').next().and_then(|s| s.parse::<usize>().ok()).is_some_and(|s| s < step) {
                kept.push(line);
            }
        }
    }
    fs::write(path, kept.join("\n") + "\n")?;
    Ok(OpenOptions::new().append(true).open(path)?)
}

fn write_top_k(path: &Path, archive: &Archive, k: usize) -> Result<()> {
    let mut s = String::new();
    for e in archive.top_k(k) {
        s.push_str(&serde_json::to_string(&e)?);
        s.push('\n');
    }
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

pub fn run(args: &DesignArgs, seed: Option<u64>) -> Result<()> {
    let mut cfg = RunConfig::load(args.config.as_deref())?;
    apply_flags(&mut cfg, args, seed);
    cfg.validate()?;
    let oracle: Box<dyn Oracle> = match (&cfg.design.oracle, args.mock_oracle) {
        (_, true) => Box::new(MockOracle),
        (Some(o), false) => {
            Box::new(CommandOracle { program: o.program.clone().into(), args: o.args.clone(), shards: o.shards })
        }
        (None, false) => return Err(invalid("no oracle: pass --mock-oracle or --oracle, or set design.oracle")),
    };
    let pocket = read_pocket(&args.pocket, args.record)?;
    ensure_dir(&args.out_dir)?;
    match cfg.precision {
        Precision::F32 => go::<f32>(args, &cfg, &pocket, oracle.as_ref()),
        Precision::F64 => go::<f64>(args, &cfg, &pocket, oracle.as_ref()),
    }
}

fn go<T: Scalar>(args: &DesignArgs, cfg: &RunConfig, pocket: &crate::inputs::Pocket, oracle: &dyn Oracle) -> Result<()> {
    let rl = &cfg.design.rl;
    let docking_ck: Checkpoint<T> = load(&args.docking)?;
    let vocab = docking_ck.vocab.clone();
    let docking: Weights<T> = docking_ck.weights;
    let prior: Weights<T> = match &args.prior {
        Some(p) => {
            let ck: Checkpoint<T> = load(p)?;
            ck.require_vocab(&vocab).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
            ck.weights
        }
        None => docking.clone(),
    };
    let docking_hash = docking.hash();
    let prompt = design_prompt(&vocab, &pocket.atoms, &pocket.coords, cfg.q).map_err(classify)?;
    let mut state = if args.resume {
        resume_agent::<T>(&args.out_dir, &vocab, rl, &docking_hash)?
    } else {
        RlState::new(prior.clone())
    };
    let end = args.stop_at.map_or(rl.steps, |s| s.min(rl.steps));
    let mut metrics = open_metrics(&args.out_dir.join(METRICS), state.step)?;
    let every = cfg.design.checkpoint_every;
    log::info!("design: steps {} to {end}, batch {}", state.step, rl.batch);
    while state.step < end {
        let next = state.step.checked_div(every).map_or(end, |k| ((k + 1) * every).min(end));
        let report = rl_run(&mut state, &prior, &docking, &vocab, &prompt, oracle, rl, Some(next)).map_err(classify)?;
        for l in &report.history {
            writeln!(metrics, "{},{},{},{},{}", l.step, l.mean_reward, l.loss, l.invalid, l.unique)?;
        }
        metrics.flush()?;
        save_agent(&args.out_dir, &state, &vocab, rl, &docking_hash)?;
        write_top_k(&args.out_dir.join(TOP_K), &state.archive, rl.top_k)?;
    }
    if !args.out_dir.join(AGENT).exists() {
        save_agent(&args.out_dir, &state, &vocab, rl, &docking_hash)?;
    }
    write_top_k(&args.out_dir.join(TOP_K), &state.archive, rl.top_k)?;
    log::info!("archive holds {} unique molecules", state.archive.len());
    Ok(())
}
