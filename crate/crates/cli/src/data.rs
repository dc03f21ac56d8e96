use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, ValueEnum};
use pockformer_core::chem::{
    coordinate_range_ok, extract_pocket, normalize_complex, parse_pdb, parse_smiles, pocket_from_atoms, read_pose,
    write_dataset, Centering, ComplexRecord,
};
use pockformer_core::seqcodec::{
    decode, encode_record, read_sequences, validate, write_sequences, ParallelSequence, Vocabulary,
    DEFAULT_MAX_LEN,
};

use crate::config::RunConfig;
use crate::error::{invalid, Result};
use crate::inputs::{is_dataset, read_records, read_vocab};

#[derive(Args, Debug)]
pub struct ConvertArgs {
    /// Dataset `.jsonl` files or `POCKET.pdb:LIGAND.xyz` pairs. The XYZ
    /// comment line holds the ligand SMILES.
    pub inputs: Vec<String>,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Keep only PDB residues with an atom within this many Å of the ligand.
    #[arg(long)]
    pub cutoff: Option<f64>,
    /// Per-axis coordinate range limit in Å (inclusive).
    #[arg(long)]
    pub range_limit: Option<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn read_pair(spec: &str, cutoff: Option<f64>) -> Result<ComplexRecord> {
    let (pdb, xyz) = spec.split_once(':').ok_or_else(|| invalid("expected POCKET.pdb:LIGAND.xyz"))?;
    let pose = read_pose(&fs::read_to_string(xyz).with_context(|| format!("reading {xyz}"))?).map_err(invalid)?;
    let graph = parse_smiles(&pose.smiles).map_err(|e| invalid(format!("ligand SMILES: {e}")))?;
    if graph.atoms.len() != pose.coords.len() {
        return Err(invalid(format!(
            "SMILES has {} atoms but the pose has {}",
            graph.atoms.len(),
            pose.coords.len()
        )));
    }
    if let Some(k) = graph.atoms.iter().zip(&pose.elements).position(|(a, e)| !a.element.eq_ignore_ascii_case(e)) {
        return Err(invalid(format!("pose atom {} is {} but the SMILES has {}", k + 1, pose.elements[k], graph.atoms[k].element)));
    }
    let atoms = parse_pdb(&fs::read_to_string(pdb).with_context(|| format!("reading {pdb}"))?).map_err(invalid)?;
    let atoms = match cutoff {
        Some(c) => extract_pocket(&atoms, &pose.coords, c),
        None => atoms,
    };
    let (pocket_atoms, pocket_coords) = pocket_from_atoms(&atoms);
    let r = ComplexRecord::new(pocket_atoms, pocket_coords, &pose.smiles, pose.coords);
    r.check().map_err(invalid)?;
    Ok(r)
}

pub fn convert(args: &ConvertArgs) -> Result<()> {
    let cfg = RunConfig::load(args.config.as_deref())?;
    let limit = args.range_limit.unwrap_or(cfg.range_limit);
    if limit.is_nan() || limit <= 0.0 {
        return Err(invalid("range limit must be positive"));
    }
    let mut kept = Vec::new();
    let (mut filtered, mut failed) = (0, 0);
    for input in &args.inputs {
        let recs = if is_dataset(Path::new(input)) {
            read_records(Path::new(input))
        } else {
            read_pair(input, args.cutoff).map(|r| vec![r])
        };
        match recs {
            Ok(recs) => {
                for r in recs {
                    if coordinate_range_ok(&r, limit) {
                        kept.push(r);
                    } else {
                        filtered += 1;
                    }
                }
            }
            Err(e) => {
                log::error!("{input}: {e:#}");
                failed += 1;
            }
        }
    }
    let mut out = BufWriter::new(File::create(&args.output).with_context(|| format!("creating {}", args.output.display()))?);
    write_dataset(&mut out, &kept)?;
    out.flush()?;
    if kept.is_empty() {
        log::warn!("no records written");
    }
    log::info!("wrote {} records; {filtered} outside the {limit} A range; {failed} inputs failed", kept.len());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CenteringArg {
    /// Mean of pocket and ligand atoms.
    Joint,
    /// Mean of pocket atoms.
    Pocket,
    /// Coordinates are already centred; only divide by q.
    None,
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Build the vocabulary from the input and write it to `--vocab`.
    #[arg(long)]
    pub build_vocab: bool,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    pub max_len: usize,
    #[arg(long, value_enum, default_value_t = CenteringArg::Joint)]
    pub centering: CenteringArg,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn scale_q(q: Option<f64>, cfg: &RunConfig) -> Result<f64> {
    let q = q.unwrap_or(cfg.q);
    if q > 0.0 && q.is_finite() {
        Ok(q)
    } else {
        Err(invalid(format!("q must be positive, got {q}")))
    }
}

pub fn encode(args: &EncodeArgs) -> Result<()> {
    let cfg = RunConfig::load(args.config.as_deref())?;
    let q = scale_q(args.q, &cfg)?;
    let records = read_records(&args.input)?;
    let vocab = if args.build_vocab {
        let v = Vocabulary::build(&records).map_err(invalid)?;
        fs::write(&args.vocab, v.to_json())?;
        v
    } else {
        read_vocab(&args.vocab)?
    };
    let mut seqs = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let r = match args.centering {
            CenteringArg::Joint => normalize_complex(r, q, Centering::Joint),
            CenteringArg::Pocket => normalize_complex(r, q, Centering::Pocket),
            CenteringArg::None => {
                let mut n = r.map_coords(|p| p.map(|v| v / q));
                n.normalized = true;
                n.q = q;
                Ok(n)
            }
        }
        .map_err(|e| invalid(format!("record {}: {e}", i + 1)))?;
        seqs.push(encode_record(&vocab, &r, q, args.max_len).map_err(|e| invalid(format!("record {}: {e}", i + 1)))?);
    }
    let mut out = BufWriter::new(File::create(&args.output).with_context(|| format!("creating {}", args.output.display()))?);
    write_sequences(&mut out, &vocab, &seqs)?;
    out.flush()?;
    log::info!("encoded {} records", seqs.len());
    Ok(())
}

#[derive(Args, Debug)]
pub struct DecodeArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    /// Dataset file to write; required unless `--validate-only`.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub q: Option<f64>,
    /// Only check the sequences and print diagnostics.
    #[arg(long)]
    pub validate_only: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
}

fn load_sequences(input: &Path, vocab: &Vocabulary) -> Result<Vec<ParallelSequence>> {
    let f = File::open(input).with_context(|| format!("opening {}", input.display()))?;
    read_sequences(BufReader::new(f), vocab).map_err(|e| invalid(format!("{}: {e}", input.display())))
}

/// Prints one line per diagnostic; fails when any sequence is invalid.
fn check_all(seqs: &[ParallelSequence], vocab: &Vocabulary) -> Result<()> {
    let mut bad = 0;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for (i, s) in seqs.iter().enumerate() {
        let diags = validate(s, vocab);
        if !diags.is_empty() {
            bad += 1;
        }
        for d in diags {
            writeln!(out, "line {}: {d}", i + 1)?;
        }
    }
    writeln!(out, "{} sequences, {bad} invalid", seqs.len())?;
    if bad > 0 {
        return Err(invalid(format!("{bad} invalid sequences")));
    }
    Ok(())
}

pub fn validate_cmd(args: &ValidateArgs) -> Result<()> {
    let vocab = read_vocab(&args.vocab)?;
    check_all(&load_sequences(&args.input, &vocab)?, &vocab)
}

pub fn decode_cmd(args: &DecodeArgs) -> Result<()> {
    let cfg = RunConfig::load(args.config.as_deref())?;
    let q = scale_q(args.q, &cfg)?;
    let vocab = read_vocab(&args.vocab)?;
    let seqs = load_sequences(&args.input, &vocab)?;
    if args.validate_only {
        return check_all(&seqs, &vocab);
    }
    let output = args.output.as_ref().ok_or_else(|| invalid("--output is required unless --validate-only"))?;
    let records = seqs
        .iter()
        .enumerate()
        .map(|(i, s)| decode(s, &vocab, q).map_err(|e| invalid(format!("line {}: {e}", i + 1))))
        .collect::<Result<Vec<_>>>()?;
    let mut out = BufWriter::new(File::create(output).with_context(|| format!("creating {}", output.display()))?);
    write_dataset(&mut out, &records)?;
    out.flush()?;
    log::info!("decoded {} sequences", records.len());
    Ok(())
}
