use super::RetrievalError;
use crate::text::{alnum_tokens, fnv1a64_seeded, padded_trigrams};

pub const DEFAULT_DIM: usize = 256;

const TRIGRAM_SEED: u64 = 0x9e37_79b9_7f4a_7c15;
const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;

/// A unit-length vector. Construct through [`EmbeddingVector::normalize`]
/// or [`EmbeddingVector::from_unit`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    /// L2-normalizes `raw`.
    pub fn normalize(raw: Vec<f64>) -> Result<Self, RetrievalError> {
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(RetrievalError::ZeroVector);
        }
        Ok(Self {
            values: raw.into_iter().map(|v| v / norm).collect(),
        })
    }

    /// Wraps values that are already unit length, e.g. read back from an
    /// index file.
    pub fn from_unit(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }
}

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError>;
}

/// Feature-hashed bag of character trigrams.
///
/// Text is lowercased and split on non-alphanumerics; each token contributes
/// its `^`/`$`-padded trigrams, each trigram adds its term frequency to one of
/// `dim` buckets chosen by a seeded FNV-1a hash. The result is L2-normalized,
/// so every component is non-negative.
#[derive(Debug, Clone)]
pub struct HashedTrigramEmbedder {
    dim: usize,
    weight_scale: f64,
}

impl Default for HashedTrigramEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIM)
    }
}

impl HashedTrigramEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self {
            dim,
            weight_scale: 1.0,
        }
    }

    /// Multiplies every pre-normalization weight by `scale`. Rankings do not
    /// depend on it; it exists so that property can be checked.
    pub fn with_weight_scale(mut self, scale: f64) -> Self {
        assert!(scale > 0.0 && scale.is_finite());
        self.weight_scale = scale;
        self
    }

    /// Raw bucket weights before normalization.
    pub fn term_weights(&self, text: &str) -> Vec<f64> {
        let mut weights = vec![0.0; self.dim];
        for token in alnum_tokens(text) {
            for gram in padded_trigrams(&token) {
                let h = fnv1a64_seeded(FNV_OFFSET ^ TRIGRAM_SEED, gram.as_bytes());
                weights[(h % self.dim as u64) as usize] += self.weight_scale;
            }
        }
        weights
    }
}

impl Embedder for HashedTrigramEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        if !text.chars().any(char::is_alphanumeric) {
            return Err(RetrievalError::EmptyText);
        }
        EmbeddingVector::normalize(self.term_weights(text))
    }
}
