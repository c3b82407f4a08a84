use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{shape_err, Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

pub const DEFAULT_EMBED_DIM: usize = 512;

/// Unit-norm text embedding with the hash of the prompt it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextEmbedding {
    pub vector: Vec<f64>,
    /// Hex SHA-256 of the normalized prompt.
    pub prompt_hash: String,
}

impl TextEmbedding {
    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    /// `[1×E]` row.
    pub fn to_row<T: Real>(&self) -> Tensor<T> {
        Tensor::from_f64(&[1, self.dim()], &self.vector).expect("non-empty embedding")
    }
}

/// Stacks embeddings into a `[T×E]` token matrix.
pub fn stack_rows<T: Real>(embeddings: &[TextEmbedding]) -> Result<Tensor<T>> {
    let dim = embeddings.first().ok_or_else(|| shape_err("no text tokens"))?.dim();
    let mut data = Vec::with_capacity(dim * embeddings.len());
    for e in embeddings {
        if e.dim() != dim {
            return Err(shape_err(format!("token dims differ: {} vs {dim}", e.dim())));
        }
        data.extend_from_slice(&e.vector);
    }
    Tensor::from_f64(&[embeddings.len(), dim], &data)
}

/// Trims, lowercases and collapses whitespace.
pub fn normalize_prompt(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn prompt_hash(normalized: &str) -> String {
    Sha256::digest(normalized.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn unit(mut v: Vec<f64>) -> Result<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::InvalidValue("embedding has zero or non-finite norm".into()));
    }
    v.iter_mut().for_each(|x| *x /= n);
    Ok(v)
}

pub trait TextEncoder: Send + Sync {
    fn dim(&self) -> usize;
    fn encode(&self, text: &str) -> Result<TextEmbedding>;

    fn encode_all(&self, texts: &[String]) -> Result<Vec<TextEmbedding>> {
        texts.iter().map(|t| self.encode(t)).collect()
    }
}

/// Deterministic stand-in for a pretrained text encoder: the seeded hash of
/// the normalized prompt seeds a Gaussian draw that is then normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubEncoder {
    pub dim: usize,
    pub seed: u64,
}

impl Default for StubEncoder {
    fn default() -> Self {
        Self { dim: DEFAULT_EMBED_DIM, seed: 0 }
    }
}

impl TextEncoder for StubEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<TextEmbedding> {
        if self.dim == 0 {
            return Err(Error::Config("embedding dim must be positive".into()));
        }
        let normalized = normalize_prompt(text);
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(normalized.as_bytes());
        let seed: [u8; 32] = h.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(seed);
        let raw = (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        Ok(TextEmbedding { vector: unit(raw)?, prompt_hash: prompt_hash(&normalized) })
    }
}

/// Precomputed embeddings keyed by exact prompt text.
#[derive(Debug, Clone, PartialEq)]
pub struct TableEncoder {
    dim: usize,
    table: BTreeMap<String, Vec<f64>>,
}

impl TableEncoder {
    pub fn new(table: BTreeMap<String, Vec<f64>>) -> Result<Self> {
        let dim = table.values().next().map(Vec::len).ok_or_else(|| Error::Format("embedding table is empty".into()))?;
        for (prompt, v) in &table {
            if v.len() != dim {
                return Err(Error::Format(format!("embedding for {prompt:?} has dim {}, expected {dim}", v.len())));
            }
        }
        Ok(Self { dim, table })
    }

    /// Reads a JSON object mapping prompt strings to float arrays.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::new(serde_json::from_str(&text)?)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl TextEncoder for TableEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<TextEmbedding> {
        let v = self.table.get(text).ok_or_else(|| Error::Lookup(format!("no embedding for prompt {text:?}")))?;
        Ok(TextEmbedding { vector: unit(v.clone())?, prompt_hash: prompt_hash(&normalize_prompt(text)) })
    }
}
