use serde::{Deserialize, Serialize};

use super::ModelError;

/// Shape hyperparameters of the dual-channel transformer.
///
/// Token embedding and token head are separate (untied) matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    #[serde(default)]
    pub dropout: f64,
}

impl ModelConfig {
    /// 4 layers, 4 heads, width 128, context 512.
    pub fn desk(vocab_size: usize) -> Self {
        ModelConfig { n_layers: 4, n_heads: 4, d_model: 128, max_len: 512, vocab_size, dropout: 0.0 }
    }

    /// 12 layers, 12 heads, width 768, context 2048.
    pub fn full(vocab_size: usize) -> Self {
        ModelConfig { n_layers: 12, n_heads: 12, d_model: 768, max_len: 2048, vocab_size, dropout: 0.0 }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::BadConfig(m));
        if self.n_layers == 0 || self.n_heads == 0 || self.d_model == 0 {
            return bad("n_layers, n_heads and d_model must be positive".into());
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.max_len == 0 || self.vocab_size == 0 {
            return bad("max_len and vocab_size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Closed-form parameter count.
    pub fn parameter_count(&self) -> usize {
        let (d, v, l) = (self.d_model, self.vocab_size, self.max_len);
        self.n_layers * (12 * d * d + 13 * d) + 2 * v * d + l * d + 3 * d + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn divisibility() {
        let mut c = ModelConfig::desk(20);
        c.d_model = 30;
        assert!(matches!(c.validate(), Err(ModelError::BadConfig(_))));
        assert!(ModelConfig::desk(20).validate().is_ok());
        assert!(ModelConfig::full(20).validate().is_ok());
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = r#"{"n_layers":1,"n_heads":1,"d_model":4,"max_len":8,"vocab_size":3,"tied":true}"#;
        assert!(serde_json::from_str::<ModelConfig>(text).is_err());
    }
}
