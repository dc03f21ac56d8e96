use std::fs::{self, File};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, ValueEnum};
use pockformer_core::design::OracleScores;
use pockformer_core::evaluate::{design_report, docking_report, read_rmsd_csv};
use serde_json::Value;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
pub struct EvalInput {
    /// CSV with an `rmsd` column.
    #[arg(long)]
    pub rmsd: Option<PathBuf>,
    /// JSON Lines of scored candidates: objects with a `scores` field, or
    /// bare score objects.
    #[arg(long)]
    pub candidates: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub input: EvalInput,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Write the report here instead of stdout.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

pub fn read_candidates(reader: impl BufRead) -> Result<Vec<Option<OracleScores>>> {
    let mut out = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |e: &dyn std::fmt::Display| invalid(format!("line {}: {e}", k + 1));
        let mut v: Value = serde_json::from_str(&line).map_err(|e| bad(&e))?;
        let scores = match v.get_mut("scores") {
            Some(s) => s.take(),
            None => v,
        };
        let s: Option<OracleScores> = serde_json::from_value(scores).map_err(|e| bad(&e))?;
        if let Some(s) = &s {
            s.validate().map_err(|e| bad(&e))?;
        }
        out.push(s);
    }
    Ok(out)
}

pub fn run(args: &EvalArgs) -> Result<()> {
    let text = if let Some(p) = &args.input.rmsd {
        let rmsds = read_rmsd_csv(open(p)?).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
        let rep = docking_report(&rmsds).map_err(invalid)?;
        match args.format {
            Format::Text => rep.to_text(),
            Format::Json => serde_json::to_string_pretty(&rep)? + "\n",
        }
    } else {
        let p = args.input.candidates.as_ref().expect("clap requires one input");
        let scores = read_candidates(open(p)?)?;
        let rep = design_report(&scores).map_err(invalid)?;
        match args.format {
            Format::Text => rep.to_text(),
            Format::Json => serde_json::to_string_pretty(&rep)? + "\n",
        }
    };
    match &args.output {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn candidate_lines_in_both_shapes() {
        let text = "{\"smiles\":\"CC\",\"scores\":{\"vina_dock\":-9.0,\"qed\":0.5,\"sa\":0.7}}\n\
                    \n\
                    {\"vina_dock\":-7.0,\"qed\":0.3,\"sa\":0.8,\"vina_score\":-6.5}\n\
                    {\"smiles\":\"C\",\"scores\":null}\n";
        let c = read_candidates(text.as_bytes()).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c[0].unwrap().vina_dock, -9.0);
        assert_eq!(c[1].unwrap().vina_score, Some(-6.5));
        assert!(c[2].is_none());
        assert!(read_candidates("{\"vina_dock\":1}\n".as_bytes()).is_err());
        assert!(read_candidates("{\"vina_dock\":-1,\"qed\":2,\"sa\":0.5}\n".as_bytes()).is_err());
    }
}
