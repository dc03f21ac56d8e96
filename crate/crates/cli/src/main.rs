//! `pockformer`: dataset conversion, training, docking, design and evaluation.

mod config;
mod data;
mod design;
mod dock;
mod error;
mod eval;
mod inputs;
mod train;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::error::{exit_code, invalid, Result};

#[derive(Parser, Debug)]
#[command(name = "pockformer", version, about = "Pocket-ligand sequence model toolkit")]
struct Cli {
    /// Base seed; replaces every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a dataset from PDB/XYZ pairs or existing dataset files.
    Convert(data::ConvertArgs),
    /// Encode dataset records as parallel sequences.
    Encode(data::EncodeArgs),
    /// Decode parallel sequences back to dataset records.
    Decode(data::DecodeArgs),
    /// Check parallel sequences and print diagnostics.
    Validate(data::ValidateArgs),
    /// Pre-train on pockets, ligands and complexes.
    Pretrain(train::PretrainArgs),
    /// Fine-tune ligand coordinate prediction on complexes.
    FinetuneDock(train::FinetuneArgs),
    /// Reinforcement-learning design for one pocket.
    Design(design::DesignArgs),
    /// Predict a ligand pose in a pocket.
    Dock(dock::DockArgs),
    /// Summarize docking RMSDs or scored candidates.
    Eval(eval::EvalArgs),
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("POCKFORMER_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        invalid(format!("POCKFORMER_THREADS must be a positive integer, got '{v}'"))
    })?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    init_threads()?;
    match &cli.command {
        Command::Convert(a) => data::convert(a),
        Command::Encode(a) => data::encode(a),
        Command::Decode(a) => data::decode_cmd(a),
        Command::Validate(a) => data::validate_cmd(a),
        Command::Pretrain(a) => train::pretrain(a, cli.seed),
        Command::FinetuneDock(a) => train::finetune_dock(a, cli.seed),
        Command::Design(a) => design::run(a, cli.seed),
        Command::Dock(a) => dock::run(a),
        Command::Eval(a) => eval::run(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
