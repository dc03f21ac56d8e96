use std::fs;
use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use pockformer_core::chem::{read_pose, rmsd, write_pose, Pose};
use pockformer_core::dock::{dock, DockError};
use pockformer_core::evaluate::{docking_report, write_rmsd_csv};
use pockformer_core::model::{load_checkpoint, Checkpoint};
use pockformer_core::Weights64;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{invalid, Result};
use crate::inputs::{ensure_dir, read_pocket, read_records};

#[derive(Args, Debug)]
pub struct DockArgs {
    /// Docking checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Pocket as a PDB file, or a dataset file with `--record`.
    #[arg(long, required_unless_present = "dataset")]
    pub pocket: Option<PathBuf>,
    /// Record index when `--pocket` is a dataset file.
    #[arg(long, default_value_t = 0)]
    pub record: usize,
    /// Ligand to place; defaults to the record's own ligand, which then
    /// also serves as the reference pose.
    #[arg(long)]
    pub smiles: Option<String>,
    /// Reference pose (XYZ) to report RMSD against.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Where to write the predicted pose (XYZ).
    #[arg(short, long, required_unless_present = "dataset")]
    pub output: Option<PathBuf>,
    /// Dock every record of this dataset against its own pocket.
    #[arg(long, conflicts_with_all = ["pocket", "smiles", "reference", "output"])]
    pub dataset: Option<PathBuf>,
    /// RMSD table for `--dataset` (default: stdout).
    #[arg(long, requires = "dataset")]
    pub rmsd_out: Option<PathBuf>,
    /// Directory for one pose file per record in `--dataset` mode.
    #[arg(long, requires = "dataset")]
    pub poses_dir: Option<PathBuf>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn classify(e: DockError) -> anyhow::Error {
    match e {
        DockError::Model(_) => e.into(),
        e => invalid(e),
    }
}

pub fn run(args: &DockArgs) -> Result<()> {
    let cfg = RunConfig::load(args.config.as_deref())?;
    let q = args.q.unwrap_or(cfg.q);
    if !(q > 0.0 && q.is_finite()) {
        return Err(invalid(format!("q must be positive, got {q}")));
    }
    let ck: Checkpoint<f64> =
        load_checkpoint(&args.checkpoint).map_err(|e| invalid(format!("{}: {e}", args.checkpoint.display())))?;
    let (w, vocab) = (ck.weights, ck.vocab);
    if let Some(ds) = &args.dataset {
        return dock_dataset(args, ds, &w, &vocab, q);
    }
    let pocket_path = args.pocket.as_ref().expect("clap requires --pocket");
    let pocket = read_pocket(pocket_path, args.record)?;
    let (smiles, mut reference) = match (&args.smiles, &pocket.record) {
        (Some(s), _) => (s.clone(), None),
        (None, Some(r)) if r.has_ligand() => (r.ligand_smiles.clone(), Some(r.ligand_coords.clone())),
        _ => return Err(invalid("--smiles is required for this pocket")),
    };
    if let Some(path) = &args.reference {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        reference = Some(read_pose(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?.coords);
    }
    let pose = dock(&w, &vocab, &pocket.atoms, &pocket.coords, &smiles, q).map_err(classify)?;
    let output = args.output.as_ref().expect("clap requires --output");
    fs::write(output, write_pose(&pose)).with_context(|| format!("writing {}", output.display()))?;
    if let Some(r) = reference {
        let d = rmsd(&pose.coords, &r).map_err(|e| invalid(format!("reference: {e}")))?;
        println!("rmsd {d:.4}");
    }
    Ok(())
}

fn dock_dataset(
    args: &DockArgs,
    path: &std::path::Path,
    w: &Weights64,
    vocab: &pockformer_core::seqcodec::Vocabulary,
    q: f64,
) -> Result<()> {
    let records = read_records(path)?;
    let results: Vec<Result<(Pose, f64)>> = records
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let pose = dock(w, vocab, &r.pocket_atoms, &r.pocket_coords, &r.ligand_smiles, q)
                .map_err(|e| classify(e).context(format!("record {i}")))?;
            let d = rmsd(&pose.coords, &r.ligand_coords).map_err(|e| invalid(format!("record {i}: {e}")))?;
            Ok((pose, d))
        })
        .collect();
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    if let Some(dir) = &args.poses_dir {
        ensure_dir(dir)?;
        for (i, (pose, _)) in results.iter().enumerate() {
            fs::write(dir.join(format!("{i}.xyz")), write_pose(pose))?;
        }
    }
    let rows: Vec<(String, f64)> = results.iter().enumerate().map(|(i, (_, d))| (i.to_string(), *d)).collect();
    let csv = write_rmsd_csv(&rows);
    match &args.rmsd_out {
        Some(p) => fs::write(p, csv).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{csv}"),
    }
    let rmsds: Vec<f64> = rows.iter().map(|r| r.1).collect();
    if let Ok(rep) = docking_report(&rmsds) {
        log::info!("docked {} complexes, mean RMSD {:.3} A", rep.n, rep.avg_rmsd);
    }
    Ok(())
}
