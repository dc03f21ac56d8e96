use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ModelConfig;
use super::ModelError;
use crate::Scalar;

/// Offsets of one transformer block inside the flat parameter vector.
/// Matrices are row-major `[in][out]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockOffsets {
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub attn_w: usize,
    pub attn_b: usize,
    pub proj_w: usize,
    pub proj_b: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
    pub fc_w: usize,
    pub fc_b: usize,
    pub out_w: usize,
    pub out_b: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    Normal,
    One,
    Zero,
}

/// Where every named tensor lives in the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub wte: usize,
    pub wpe: usize,
    pub blocks: Vec<BlockOffsets>,
    pub lnf_g: usize,
    pub lnf_b: usize,
    pub head_tok: usize,
    pub head_num_w: usize,
    pub head_num_b: usize,
    pub total: usize,
    tensors: Vec<TensorInfo>,
    inits: Vec<Init>,
}

impl Layout {
    pub fn new(c: &ModelConfig) -> Layout {
        let (d, v) = (c.d_model, c.vocab_size);
        let mut tensors = Vec::new();
        let mut inits = Vec::new();
        let mut at = 0;
        let mut add = |name: String, shape: Vec<usize>, init: Init| {
            let offset = at;
            at += shape.iter().product::<usize>();
            tensors.push(TensorInfo { name, shape, offset });
            inits.push(init);
            offset
        };
        let wte = add("wte".into(), vec![v, d], Init::Normal);
        let wpe = add("wpe".into(), vec![c.max_len, d], Init::Normal);
        let mut blocks = Vec::with_capacity(c.n_layers);
        for l in 0..c.n_layers {
            let n = |s: &str| format!("h.{l}.{s}");
            blocks.push(BlockOffsets {
                ln1_g: add(n("ln1.g"), vec![d], Init::One),
                ln1_b: add(n("ln1.b"), vec![d], Init::Zero),
                attn_w: add(n("attn.w"), vec![d, 3 * d], Init::Normal),
                attn_b: add(n("attn.b"), vec![3 * d], Init::Zero),
                proj_w: add(n("proj.w"), vec![d, d], Init::Normal),
                proj_b: add(n("proj.b"), vec![d], Init::Zero),
                ln2_g: add(n("ln2.g"), vec![d], Init::One),
                ln2_b: add(n("ln2.b"), vec![d], Init::Zero),
                fc_w: add(n("fc.w"), vec![d, 4 * d], Init::Normal),
                fc_b: add(n("fc.b"), vec![4 * d], Init::Zero),
                out_w: add(n("out.w"), vec![4 * d, d], Init::Normal),
                out_b: add(n("out.b"), vec![d], Init::Zero),
            });
        }
        let lnf_g = add("lnf.g".into(), vec![d], Init::One);
        let lnf_b = add("lnf.b".into(), vec![d], Init::Zero);
        let head_tok = add("head.tok".into(), vec![d, v], Init::Normal);
        let head_num_w = add("head.num.w".into(), vec![d], Init::Normal);
        let head_num_b = add("head.num.b".into(), vec![1], Init::Zero);
        Layout {
            wte,
            wpe,
            blocks,
            lnf_g,
            lnf_b,
            head_tok,
            head_num_w,
            head_num_b,
            total: at,
            tensors,
            inits,
        }
    }

    pub fn tensors(&self) -> &[TensorInfo] {
        &self.tensors
    }

    /// Name and element position of flat parameter `index`.
    pub fn locate(&self, index: usize) -> Option<(&str, usize)> {
        let k = self.tensors.partition_point(|t| t.offset <= index).checked_sub(1)?;
        let t = &self.tensors[k];
        (index < t.offset + t.len()).then(|| (t.name.as_str(), index - t.offset))
    }
}

/// Model parameters as one flat vector plus the config that shapes it.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights<T: Scalar> {
    pub config: ModelConfig,
    pub layout: Layout,
    pub params: Vec<T>,
}

impl<T: Scalar> Weights<T> {
    /// Embeddings and projections from N(0, 0.02), norm gains 1, biases 0.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = Layout::new(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.02).expect("valid std");
        let mut params = vec![T::zero(); layout.total];
        for (t, init) in layout.tensors.iter().zip(&layout.inits) {
            let slot = &mut params[t.offset..t.offset + t.len()];
            match init {
                Init::Normal => slot.iter_mut().for_each(|p| *p = T::of(normal.sample(&mut rng))),
                Init::One => slot.fill(T::one()),
                Init::Zero => {}
            }
        }
        Ok(Weights { config: config.clone(), layout, params })
    }

    /// Wraps an existing parameter vector, checking its length.
    pub fn from_params(config: &ModelConfig, params: Vec<T>) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = Layout::new(config);
        if params.len() != layout.total {
            return Err(ModelError::Checkpoint(format!(
                "expected {} parameters, found {}",
                layout.total,
                params.len()
            )));
        }
        Ok(Weights { config: config.clone(), layout, params })
    }

    pub fn tensor(&self, name: &str) -> Option<&[T]> {
        let t = self.layout.tensors.iter().find(|t| t.name == name)?;
        Some(&self.params[t.offset..t.offset + t.len()])
    }

    pub fn zeros_like(&self) -> Vec<T> {
        vec![T::zero(); self.params.len()]
    }

    /// Little-endian parameter bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.params.len() * T::BYTES);
        for &p in &self.params {
            p.write_le(&mut out);
        }
        out
    }

    /// SHA-256 of the parameter bytes, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }

    /// Casts every parameter to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Weights<U> {
        Weights {
            config: self.config.clone(),
            layout: self.layout.clone(),
            params: self.params.iter().map(|p| U::of(p.as_f64())).collect(),
        }
    }
}
