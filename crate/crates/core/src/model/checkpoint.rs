//! Checkpoint file: magic, JSON header, little-endian tensor blob.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::weights::{Layout, TensorInfo, Weights};
use super::ModelError;
use crate::seqcodec::Vocabulary;
use crate::Scalar;

const MAGIC: &[u8; 8] = b"PKFMCKPT";
const VERSION: u32 = 1;

/// Weights plus everything needed to resume or reuse them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T: Scalar> {
    pub weights: Weights<T>,
    pub vocab: Vocabulary,
    /// Additional named vectors such as optimizer moments.
    pub extra: Vec<(String, Vec<T>)>,
    /// Free-form progress record (step, epoch, ...).
    pub meta: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExtraInfo {
    name: String,
    len: usize,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    dtype: String,
    config: ModelConfig,
    vocab: Vocabulary,
    vocab_hash: String,
    tensors: Vec<TensorInfo>,
    extra: Vec<ExtraInfo>,
    meta: serde_json::Value,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(weights: Weights<T>, vocab: Vocabulary) -> Self {
        Checkpoint { weights, vocab, extra: Vec::new(), meta: serde_json::Value::Null }
    }

    pub fn extra(&self, name: &str) -> Option<&[T]> {
        self.extra.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    /// Fails unless the checkpoint was built with `vocab`.
    pub fn require_vocab(&self, vocab: &Vocabulary) -> Result<(), ModelError> {
        let (expected, found) = (vocab.hash(), self.vocab.hash());
        if expected != found {
            return Err(ModelError::VocabMismatch { expected, found });
        }
        Ok(())
    }
}

fn bad(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

/// Writes to a temporary sibling and renames it into place.
pub fn save_checkpoint<T: Scalar>(path: &Path, ck: &Checkpoint<T>) -> Result<(), ModelError> {
    if ck.vocab.len() != ck.weights.config.vocab_size {
        return Err(bad(format!(
            "vocabulary has {} tokens but the model expects {}",
            ck.vocab.len(),
            ck.weights.config.vocab_size
        )));
    }
    let mut offset = ck.weights.params.len();
    let extra = ck
        .extra
        .iter()
        .map(|(name, v)| {
            let info = ExtraInfo { name: name.clone(), len: v.len(), offset };
            offset += v.len();
            info
        })
        .collect();
    let header = Header {
        dtype: T::DTYPE.into(),
        config: ck.weights.config.clone(),
        vocab: ck.vocab.clone(),
        vocab_hash: ck.vocab.hash(),
        tensors: ck.weights.layout.tensors().to_vec(),
        extra,
        meta: ck.meta.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| bad(e.to_string()))?;
    let mut bytes = Vec::with_capacity(24 + json.len() + offset * T::BYTES);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    for &p in ck.weights.params.iter().chain(ck.extra.iter().flat_map(|(_, v)| v)) {
        p.write_le(&mut bytes);
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    {
        let mut f = fs::File::create(tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

fn read_values<T: Scalar>(blob: &[u8], dtype: &str, offset: usize, len: usize) -> Result<Vec<T>, ModelError> {
    let width = match dtype {
        "f32" => 4,
        "f64" => 8,
        other => return Err(bad(format!("unsupported dtype '{other}'"))),
    };
    let bytes = blob
        .get(offset * width..(offset + len) * width)
        .ok_or_else(|| bad("tensor data is truncated"))?;
    Ok(bytes
        .chunks_exact(width)
        .map(|c| if width == 4 { T::of(f32::read_le(c) as f64) } else { T::of(f64::read_le(c)) })
        .collect())
}

/// Reads a checkpoint, converting stored values to `T` when the dtype differs.
pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>, ModelError> {
    let bytes = fs::read(path)?;
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let json = bytes.get(20..20 + hlen).ok_or_else(|| bad("header is truncated"))?;
    let header: Header = serde_json::from_slice(json).map_err(|e| bad(format!("header: {e}")))?;
    let blob = &bytes[20 + hlen..];

    header.config.validate()?;
    if header.vocab.hash() != header.vocab_hash {
        return Err(ModelError::VocabMismatch { expected: header.vocab_hash, found: header.vocab.hash() });
    }
    if header.vocab.len() != header.config.vocab_size {
        return Err(bad("vocabulary size does not match the config"));
    }
    let layout = Layout::new(&header.config);
    if layout.tensors() != header.tensors.as_slice() {
        let first = layout
            .tensors()
            .iter()
            .zip(&header.tensors)
            .find(|(a, b)| a != b)
            .map(|(a, _)| a.name.clone())
            .unwrap_or_else(|| "tensor count".into());
        return Err(bad(format!("shape mismatch at {first}")));
    }
    let params = read_values(blob, &header.dtype, 0, layout.total)?;
    let extra = header
        .extra
        .iter()
        .map(|e| Ok((e.name.clone(), read_values(blob, &header.dtype, e.offset, e.len)?)))
        .collect::<Result<_, ModelError>>()?;
    if params.iter().any(|p: &T| !p.is_finite()) {
        return Err(ModelError::NonFinite("checkpoint parameters".into()));
    }
    Ok(Checkpoint {
        weights: Weights::from_params(&header.config, params)?,
        vocab: header.vocab,
        extra,
        meta: header.meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::ComplexRecord;

    fn setup() -> (Weights<f32>, Vocabulary) {
        let v = Vocabulary::build([&ComplexRecord::new(vec!["N".into()], vec![[0.0; 3]], "CO", vec![[0.0; 3]; 2])])
            .unwrap();
        let c = ModelConfig { n_layers: 1, n_heads: 1, d_model: 4, max_len: 8, vocab_size: v.len(), dropout: 0.0 };
        (Weights::init(&c, 4).unwrap(), v)
    }

    #[test]
    fn round_trip_and_cast() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let (w, v) = setup();
        let mut ck = Checkpoint::new(w.clone(), v.clone());
        ck.extra.push(("adam.m".into(), vec![1.5; 3]));
        ck.meta = serde_json::json!({"step": 12});
        save_checkpoint(&path, &ck).unwrap();
        assert!(!dir.path().join("m.ckpt.tmp").exists());
        let back: Checkpoint<f32> = load_checkpoint(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.weights.hash(), w.hash());
        let wide: Checkpoint<f64> = load_checkpoint(&path).unwrap();
        assert_eq!(wide.weights.params[5], w.params[5] as f64);
        assert_eq!(wide.extra("adam.m"), Some(&[1.5f64; 3][..]));
        back.require_vocab(&v).unwrap();
    }

    #[test]
    fn rejects_corruption_and_foreign_vocab() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let (w, v) = setup();
        save_checkpoint(&path, &Checkpoint::new(w, v)).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 4);
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_checkpoint::<f32>(&path), Err(ModelError::Checkpoint(_))));
        fs::write(&path, b"garbage-garbage-garbage").unwrap();
        assert!(load_checkpoint::<f32>(&path).is_err());

        let (w, v) = setup();
        let ck = Checkpoint::new(w, v);
        let other = Vocabulary::build([&ComplexRecord::new(vec![], vec![], "CS", vec![[0.0; 3]; 2])]).unwrap();
        assert!(matches!(ck.require_vocab(&other), Err(ModelError::VocabMismatch { .. })));
    }
}
