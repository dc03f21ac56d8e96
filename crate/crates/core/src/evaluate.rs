//! Docking RMSD and design quality reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{is_success, OracleScores};

/// RMSD cut-offs in Å.
pub const RMSD_THRESHOLDS: [f64; 4] = [1.0, 2.0, 3.0, 5.0];

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no values to evaluate")]
    Empty,
    #[error("candidate {0} has no scores")]
    Unscored(usize),
    #[error("value {0} is not a valid RMSD")]
    BadValue(f64),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DockingReport {
    /// Percentage of RMSDs strictly below each threshold, keyed "1.0" etc.
    pub pct_under: BTreeMap<String, f64>,
    pub avg_rmsd: f64,
    pub n: usize,
}

pub fn docking_report(rmsds: &[f64]) -> Result<DockingReport, EvalError> {
    if rmsds.is_empty() {
        return Err(EvalError::Empty);
    }
    if let Some(&bad) = rmsds.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
        return Err(EvalError::BadValue(bad));
    }
    let n = rmsds.len();
    let pct_under = RMSD_THRESHOLDS
        .iter()
        .map(|&t| {
            let k = rmsds.iter().filter(|&&r| r < t).count();
            (format!("{t:.1}"), 100.0 * k as f64 / n as f64)
        })
        .collect();
    Ok(DockingReport { pct_under, avg_rmsd: rmsds.iter().sum::<f64>() / n as f64, n })
}

impl DockingReport {
    pub fn pct(&self, threshold: f64) -> Option<f64> {
        self.pct_under.get(&format!("{threshold:.1}")).copied()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in RMSD_THRESHOLDS {
            let _ = write!(s, "%<{t:.1}A  ");
        }
        s.push_str("Avg.     n\n");
        for t in RMSD_THRESHOLDS {
            let _ = write!(s, "{:<8.1}", self.pct(t).unwrap_or(f64::NAN));
        }
        let _ = writeln!(s, "{:<8.3} {}", self.avg_rmsd, self.n);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub mean_vina_dock: f64,
    pub mean_qed: f64,
    pub mean_sa: f64,
    /// Present only when every candidate carries a pre-redock score.
    pub mean_vina_score: Option<f64>,
    pub success_rate: f64,
    pub n: usize,
}

pub fn design_report(scores: &[Option<OracleScores>]) -> Result<DesignReport, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::Empty);
    }
    let s: Vec<&OracleScores> =
        scores.iter().enumerate().map(|(i, s)| s.as_ref().ok_or(EvalError::Unscored(i))).collect::<Result<_, _>>()?;
    let n = s.len() as f64;
    let mean = |f: fn(&OracleScores) -> f64| s.iter().map(|x| f(x)).sum::<f64>() / n;
    let mean_vina_score = s
        .iter()
        .map(|x| x.vina_score)
        .collect::<Option<Vec<f64>>>()
        .map(|v| v.iter().sum::<f64>() / n);
    let hits = s.iter().filter(|x| is_success(x)).count();
    Ok(DesignReport {
        mean_vina_dock: mean(|x| x.vina_dock),
        mean_qed: mean(|x| x.qed),
        mean_sa: mean(|x| x.sa),
        mean_vina_score,
        success_rate: 100.0 * hits as f64 / n,
        n: s.len(),
    })
}

impl DesignReport {
    pub fn to_text(&self) -> String {
        let vs = self.mean_vina_score.map_or("-".to_string(), |v| format!("{v:.3}"));
        format!(
            "Vina Score  Vina Dock  QED     SA      Success Rate  n\n{:<11} {:<10.3} {:<7.3} {:<7.3} {:<13.1} {}\n",
            vs, self.mean_vina_dock, self.mean_qed, self.mean_sa, self.success_rate, self.n
        )
    }
}

/// `id,rmsd` rows with a header.
pub fn write_rmsd_csv(rows: &[(String, f64)]) -> String {
    let mut s = String::from("id,rmsd\n");
    for (id, r) in rows {
        let _ = writeln!(s, "{id},{r}");
    }
    s
}

/// Reads the RMSD column of a CSV with an `rmsd` header (or a bare column).
pub fn read_rmsd_csv(reader: impl BufRead) -> Result<Vec<f64>, EvalError> {
    let mut col = None;
    let mut out = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| EvalError::Parse { line: k + 1, reason: e.to_string() })?;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if line.trim().is_empty() {
            continue;
        }
        if k == 0 {
            if let Some(i) = fields.iter().position(|f| f.eq_ignore_ascii_case("rmsd")) {
                col = Some(i);
                continue;
            }
        }
        let i = col.unwrap_or(fields.len() - 1);
        let v = fields
            .get(i)
            .and_then(|f| f.parse::<f64>().ok())
            .ok_or_else(|| EvalError::Parse { line: k + 1, reason: format!("no RMSD value in '{line}'") })?;
        out.push(v);
    }
    Ok(out)
}
