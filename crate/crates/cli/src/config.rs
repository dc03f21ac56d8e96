use std::fs;
use std::path::Path;

use pockformer_core::chem::{DEFAULT_Q, DEFAULT_RANGE_LIMIT};
use pockformer_core::design::RLConfig;
use pockformer_core::model::ModelConfig;
use pockformer_core::train::{Augment, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

/// Model shape; the vocabulary size comes from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub max_len: usize,
    pub dropout: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = ModelConfig::desk(1);
        ModelSection { n_layers: d.n_layers, n_heads: d.n_heads, d_model: d.d_model, max_len: d.max_len, dropout: 0.0 }
    }
}

impl ModelSection {
    pub fn config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            d_model: self.d_model,
            max_len: self.max_len,
            vocab_size,
            dropout: self.dropout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainSection {
    /// When set, `train.total_steps` is derived from the corpus size.
    pub epochs: Option<usize>,
    /// Copies of each pocket-only record in the corpus.
    pub pocket_copies: usize,
    /// Copies of each pocket-ligand complex in the corpus.
    pub complex_copies: usize,
    pub train: TrainConfig,
}

impl Default for PretrainSection {
    fn default() -> Self {
        PretrainSection { epochs: None, pocket_copies: 1, complex_copies: 1, train: TrainConfig::pretrain_default(1000) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DockSection {
    pub epochs: Option<usize>,
    pub augment: Augment,
    pub train: TrainConfig,
}

impl Default for DockSection {
    fn default() -> Self {
        DockSection { epochs: None, augment: Augment::ALL, train: TrainConfig::docking_default(1000) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default = "one")]
    pub shards: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignSection {
    pub rl: RLConfig,
    /// Save the agent every this many steps (0: only at the end).
    pub checkpoint_every: usize,
    pub oracle: Option<OracleSection>,
}

impl Default for DesignSection {
    fn default() -> Self {
        DesignSection { rl: RLConfig::default(), checkpoint_every: 50, oracle: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub q: f64,
    pub range_limit: f64,
    pub precision: Precision,
    pub model: ModelSection,
    pub pretrain: PretrainSection,
    pub finetune_dock: DockSection,
    pub design: DesignSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            q: DEFAULT_Q,
            range_limit: DEFAULT_RANGE_LIMIT,
            precision: Precision::default(),
            model: ModelSection::default(),
            pretrain: PretrainSection::default(),
            finetune_dock: DockSection::default(),
            design: DesignSection::default(),
        }
    }
}

/// Recursively overlays `patch` onto `base`; objects merge, everything else
/// replaces.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl RunConfig {
    /// Defaults overlaid with the file at `path`, if any. Unknown keys are
    /// rejected.
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        RunConfig::from_json(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
    }

    pub fn from_json(text: &str) -> Result<RunConfig> {
        let patch: Value = serde_json::from_str(text).map_err(invalid)?;
        if !patch.is_object() {
            return Err(invalid("config must be a JSON object"));
        }
        let mut base = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
        merge(&mut base, patch);
        serde_json::from_value(base).map_err(invalid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q.is_finite()) {
            return Err(invalid(format!("q must be positive, got {}", self.q)));
        }
        if self.range_limit.is_nan() || self.range_limit <= 0.0 {
            return Err(invalid(format!("range_limit must be positive, got {}", self.range_limit)));
        }
        self.model.config(1).validate().map_err(invalid)?;
        for (name, t) in [("pretrain", &self.pretrain.train), ("finetune_dock", &self.finetune_dock.train)] {
            t.validate().map_err(|e| invalid(format!("{name}: {e}")))?;
        }
        if self.pretrain.pocket_copies == 0 || self.pretrain.complex_copies == 0 {
            return Err(invalid("pretrain copies must be at least 1"));
        }
        for (name, e) in [("pretrain", self.pretrain.epochs), ("finetune_dock", self.finetune_dock.epochs)] {
            if e == Some(0) {
                return Err(invalid(format!("{name}: epochs must be at least 1")));
            }
        }
        self.design.rl.validate().map_err(|e| invalid(format!("design: {e}")))?;
        if let Some(o) = &self.design.oracle {
            if o.program.is_empty() || o.shards == 0 {
                return Err(invalid("design.oracle needs a program and at least one shard"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_sections_merge_over_defaults() {
        let c = RunConfig::from_json(r#"{"q": 4.0, "pretrain": {"train": {"max_lr": 0.01}}}"#).unwrap();
        assert_eq!(c.q, 4.0);
        assert_eq!(c.pretrain.train.max_lr, 0.01);
        assert_eq!(c.pretrain.train.micro_batch, 64);
        assert_eq!(c.design.rl.sigma, 100.0);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_json(r#"{"qq": 4.0}"#).is_err());
        assert!(RunConfig::from_json(r#"{"model": {"layers": 2}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"design": {"rl": {"sigmaa": 1}}}"#).is_err());
        assert!(RunConfig::from_json("[]").is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let c = RunConfig::from_json(r#"{"model": {"d_model": 30, "n_heads": 4}}"#).unwrap();
        assert!(c.validate().is_err());
        let c = RunConfig::from_json(r#"{"pretrain": {"train": {"warmup_frac": 0.0}}}"#).unwrap();
        assert!(c.validate().is_err());
        let c = RunConfig::from_json(r#"{"q": -1}"#).unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn shipped_full_config_is_valid() {
        let text = include_str!("../../../configs/full.json");
        let c = RunConfig::from_json(text).unwrap();
        c.validate().unwrap();
        assert_eq!((c.model.n_layers, c.model.n_heads, c.model.d_model, c.model.max_len), (12, 12, 768, 2048));
        assert_eq!(c.pretrain.train.effective_batch(), 10240);
        assert_eq!(c.finetune_dock.train.effective_batch(), 128);
        assert_eq!(c.finetune_dock.epochs, Some(2000));
        assert_eq!((c.design.rl.steps, c.design.rl.batch, c.design.rl.sigma), (500, 128, 100.0));
    }
}
