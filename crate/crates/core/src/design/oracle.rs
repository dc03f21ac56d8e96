//! Scoring oracles and their tab-separated file protocol.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::Command;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DesignError;
use crate::chem::{parse_smiles, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleScores {
    /// Docking score in kcal/mol, lower is better.
    pub vina_dock: f64,
    pub qed: f64,
    /// Synthetic accessibility rescaled to [0, 1], higher is better.
    pub sa: f64,
    /// Score of the generated pose before re-docking, when supplied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vina_score: Option<f64>,
}

impl OracleScores {
    pub fn validate(&self) -> Result<(), DesignError> {
        if !self.vina_dock.is_finite() {
            return Err(DesignError::OutOfRange { what: "vina_dock", value: self.vina_dock });
        }
        for (what, v) in [("qed", self.qed), ("sa", self.sa)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(DesignError::OutOfRange { what, value: v });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRequest {
    pub index: usize,
    pub smiles: String,
    /// Ligand coordinates in Å, SMILES atom order.
    pub coords: Vec<Vec3>,
}

pub trait Oracle: Sync {
    /// One score per request, in request order.
    fn score(&self, requests: &[OracleRequest]) -> Result<Vec<OracleScores>, DesignError>;
}

/// `index \t smiles \t x,y,z;x,y,z;...` per line.
pub fn format_request(requests: &[OracleRequest]) -> String {
    let mut s = String::new();
    for r in requests {
        let coords: Vec<String> = r.coords.iter().map(|p| format!("{},{},{}", p[0], p[1], p[2])).collect();
        let _ = writeln!(s, "{}\t{}\t{}", r.index, r.smiles, coords.join(";"));
    }
    s
}

fn protocol(line: usize, reason: impl Into<String>) -> DesignError {
    DesignError::Protocol { line, reason: reason.into() }
}

pub fn parse_request(text: &str) -> Result<Vec<OracleRequest>, DesignError> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(protocol(k + 1, "expected index, SMILES and coordinates"));
        }
        let index = f[0].trim().parse().map_err(|_| protocol(k + 1, "bad index"))?;
        let mut coords = Vec::new();
        for triple in f[2].split(';').filter(|t| !t.is_empty()) {
            let v: Vec<f64> = triple
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| protocol(k + 1, format!("bad coordinate '{triple}'")))?;
            if v.len() != 3 {
                return Err(protocol(k + 1, format!("coordinate '{triple}' needs three values")));
            }
            coords.push([v[0], v[1], v[2]]);
        }
        out.push(OracleRequest { index, smiles: f[1].to_string(), coords });
    }
    Ok(out)
}

/// `index \t vina_dock \t qed \t sa [\t vina_score]` per line.
pub fn format_response(rows: &[(usize, OracleScores)]) -> String {
    let mut s = String::new();
    for (i, r) in rows {
        let _ = write!(s, "{i}\t{}\t{}\t{}", r.vina_dock, r.qed, r.sa);
        if let Some(v) = r.vina_score {
            let _ = write!(s, "\t{v}");
        }
        s.push('\n');
    }
    s
}

/// Parses a response and orders it like `expected` (the request indices).
pub fn parse_response(text: &str, expected: &[usize]) -> Result<Vec<OracleScores>, DesignError> {
    let want: HashMap<usize, usize> = expected.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let mut out: Vec<Option<OracleScores>> = vec![None; expected.len()];
    let mut rows = 0;
    for (k, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let line_no = k + 1;
        let f: Vec<&str> = line.split('\t').map(str::trim).collect();
        if f.len() != 4 && f.len() != 5 {
            return Err(protocol(line_no, format!("expected 4 or 5 tab-separated fields, found {}", f.len())));
        }
        let index: usize = f[0].parse().map_err(|_| protocol(line_no, format!("bad index '{}'", f[0])))?;
        let num = |s: &str, what: &str| {
            s.parse::<f64>().map_err(|_| protocol(line_no, format!("bad {what} '{s}'")))
        };
        let scores = OracleScores {
            vina_dock: num(f[1], "vina_dock")?,
            qed: num(f[2], "qed")?,
            sa: num(f[3], "sa")?,
            vina_score: f.get(4).map(|s| num(s, "vina_score")).transpose()?,
        };
        scores.validate().map_err(|e| protocol(line_no, e.to_string()))?;
        let slot = *want.get(&index).ok_or_else(|| protocol(line_no, format!("unknown index {index}")))?;
        if out[slot].replace(scores).is_some() {
            return Err(protocol(line_no, format!("duplicate index {index}")));
        }
        rows += 1;
    }
    if rows != expected.len() {
        return Err(protocol(0, format!("expected {} rows, found {rows}", expected.len())));
    }
    Ok(out.into_iter().map(|s| s.expect("every index seen")).collect())
}

/// Deterministic stand-in: rewards nitrogen and oxygen atoms.
///
/// `vina_dock = −2·(#N + #O)`, `qed = 0.5` up to 40 heavy atoms else 0.2,
/// `sa = 0.7`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockOracle;

pub fn mock_scores(smiles: &str) -> Result<OracleScores, DesignError> {
    let g = parse_smiles(smiles)?;
    let polar = g.atoms.iter().filter(|a| a.element == "N" || a.element == "O").count();
    let heavy = g.atoms.iter().filter(|a| a.element != "H").count();
    Ok(OracleScores {
        vina_dock: -2.0 * polar as f64,
        qed: if heavy <= 40 { 0.5 } else { 0.2 },
        sa: 0.7,
        vina_score: None,
    })
}

impl Oracle for MockOracle {
    /// Round-trips through the same request and response text as an
    /// external command.
    fn score(&self, requests: &[OracleRequest]) -> Result<Vec<OracleScores>, DesignError> {
        let parsed = parse_request(&format_request(requests))?;
        let rows = parsed
            .par_iter()
            .map(|r| Ok((r.index, mock_scores(&r.smiles)?)))
            .collect::<Result<Vec<_>, DesignError>>()?;
        let expected: Vec<usize> = requests.iter().map(|r| r.index).collect();
        parse_response(&format_response(&rows), &expected)
    }
}

/// Runs `program args... <request> <response>` once per shard, shards in
/// parallel.
#[derive(Debug, Clone)]
pub struct CommandOracle {
    pub program: PathBuf,
    pub args: Vec<String>,
    /// Number of concurrent invocations (at least 1).
    pub shards: usize,
}

impl CommandOracle {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        CommandOracle { program: program.into(), args: Vec::new(), shards: 1 }
    }

    fn run_shard(&self, requests: &[OracleRequest]) -> Result<Vec<OracleScores>, DesignError> {
        let dir = tempfile::tempdir()?;
        let req = dir.path().join("request.tsv");
        let resp = dir.path().join("response.tsv");
        std::fs::write(&req, format_request(requests))?;
        let out = Command::new(&self.program)
            .args(&self.args)
            .arg(&req)
            .arg(&resp)
            .output()
            .map_err(|e| DesignError::Oracle(format!("cannot run {}: {e}", self.program.display())))?;
        if !out.status.success() {
            return Err(DesignError::Oracle(format!(
                "{} exited with {}: {}",
                self.program.display(),
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        let text = std::fs::read_to_string(&resp)
            .map_err(|e| DesignError::Oracle(format!("no response file: {e}")))?;
        let expected: Vec<usize> = requests.iter().map(|r| r.index).collect();
        parse_response(&text, &expected)
    }
}

impl Oracle for CommandOracle {
    fn score(&self, requests: &[OracleRequest]) -> Result<Vec<OracleScores>, DesignError> {
        if requests.is_empty() {
            return Ok(Vec::new());
        }
        let size = requests.len().div_ceil(self.shards.max(1));
        let parts = requests
            .par_chunks(size)
            .map(|c| self.run_shard(c))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(parts.into_iter().flatten().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(i: usize, s: &str) -> OracleRequest {
        OracleRequest { index: i, smiles: s.into(), coords: vec![[1.0, -2.5, 0.125]; 2] }
    }

    #[test]
    fn mock_definition() {
        let s = mock_scores("CCO").unwrap();
        assert_eq!((s.vina_dock, s.qed, s.sa), (-2.0, 0.5, 0.7));
        assert_eq!(mock_scores("c1ccncc1N").unwrap().vina_dock, -4.0);
        assert_eq!(mock_scores(&"C".repeat(41)).unwrap().qed, 0.2);
        assert_eq!(mock_scores(&"C".repeat(40)).unwrap().qed, 0.5);
        assert!(MockOracle.score(&[]).unwrap().is_empty());
        let out = MockOracle.score(&[req(7, "NCO"), req(2, "CC")]).unwrap();
        assert_eq!(out[0].vina_dock, -4.0);
        assert_eq!(out[1].vina_dock, 0.0);
    }

    #[test]
    fn request_round_trip() {
        let rs = vec![req(0, "CCO"), req(3, "c1ccccc1")];
        assert_eq!(parse_request(&format_request(&rs)).unwrap(), rs);
        assert_eq!(format_request(&rs[..1]), "0\tCCO\t1,-2.5,0.125;1,-2.5,0.125\n");
    }

    #[test]
    fn response_errors_name_the_line() {
        let e = parse_response("0\t-1\t0.5\t0.7\n1\t-1\tabc\t0.7\n", &[0, 1]).unwrap_err();
        assert!(matches!(e, DesignError::Protocol { line: 2, .. }), "{e}");
        let e = parse_response("0\t-1\t0.5\t0.7\n", &[0, 1]).unwrap_err();
        assert!(e.to_string().contains("expected 2 rows"));
        let e = parse_response("0\t-1\t0.5\t0.7\n0\t-1\t0.5\t0.7\n", &[0, 1]).unwrap_err();
        assert!(matches!(e, DesignError::Protocol { line: 2, .. }));
        let e = parse_response("5\t-1\t0.5\t0.7\n", &[0]).unwrap_err();
        assert!(matches!(e, DesignError::Protocol { line: 1, .. }));
        let e = parse_response("0\t-1\t1.5\t0.7\n", &[0]).unwrap_err();
        assert!(matches!(e, DesignError::Protocol { line: 1, .. }));
        let ok = parse_response("1\t-3\t0.4\t0.6\t-2.5\n0\t-1\t0.5\t0.7\n", &[0, 1]).unwrap();
        assert_eq!(ok[0].vina_dock, -1.0);
        assert_eq!(ok[1].vina_score, Some(-2.5));
    }

    #[cfg(unix)]
    #[test]
    fn command_oracle_protocol() {
        use std::os::unix::fs::PermissionsExt;
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("oracle.sh");
        std::fs::write(&script, "#!/bin/sh\nawk -F'\\t' '{print $1\"\\t-9.5\\t0.4\\t0.8\"}' \"$1\" > \"$2\"\n").unwrap();
        std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();
        let mut o = CommandOracle::new(&script);
        o.shards = 2;
        let rs: Vec<_> = (0..5).map(|i| req(i, "CC")).collect();
        let out = o.score(&rs).unwrap();
        assert_eq!(out.len(), 5);
        assert!(out.iter().all(|s| s.vina_dock == -9.5));

        let bad = dir.path().join("fail.sh");
        std::fs::write(&bad, "#!/bin/sh\necho broken >&2\nexit 3\n").unwrap();
        std::fs::set_permissions(&bad, std::fs::Permissions::from_mode(0o755)).unwrap();
        let e = CommandOracle::new(&bad).score(&rs).unwrap_err();
        assert!(matches!(e, DesignError::Oracle(ref m) if m.contains("broken")));
    }
}
