use super::oracle::OracleScores;
use super::DesignError;

/// Vina Dock cut-off (kcal/mol) for a successful design.
pub const VINA_SUCCESS: f64 = -8.18;
pub const QED_THRESHOLD: f64 = 0.25;
pub const SA_THRESHOLD: f64 = 0.59;
pub const DEFAULT_SIGMA: f64 = 100.0;

/// Reverse sigmoid of the docking score; 0.5 at −10 kcal/mol.
pub fn reward_dock(vina_dock: f64) -> f64 {
    1.0 / (1.0 + 10f64.powf(0.625 * (vina_dock + 10.0)))
}

fn unit(what: &'static str, value: f64) -> Result<f64, DesignError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(DesignError::OutOfRange { what, value })
    }
}

pub fn reward_qed(qed: f64) -> Result<f64, DesignError> {
    Ok(if unit("qed", qed)? > QED_THRESHOLD { 1.0 } else { 0.0 })
}

pub fn reward_sa(sa: f64) -> Result<f64, DesignError> {
    Ok(if unit("sa", sa)? > SA_THRESHOLD { 1.0 } else { 0.0 })
}

/// Mean of the docking, QED and SA rewards.
pub fn reward_total(s: &OracleScores) -> Result<f64, DesignError> {
    s.validate()?;
    Ok((reward_dock(s.vina_dock) + reward_qed(s.qed)? + reward_sa(s.sa)?) / 3.0)
}

/// `(log π_prior + σ·R − log π_agent)²`.
pub fn rl_loss(pretrained_loglik: f64, agent_loglik: f64, reward: f64, sigma: f64) -> f64 {
    let d = pretrained_loglik + sigma * reward - agent_loglik;
    d * d
}

/// All three strict success criteria.
pub fn is_success(s: &OracleScores) -> bool {
    s.vina_dock < VINA_SUCCESS && s.qed > QED_THRESHOLD && s.sa > SA_THRESHOLD
}
