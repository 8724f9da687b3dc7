use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EmbeddingVector, RetrievalError};

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub chunk_id: String,
    pub vector: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub chunk_id: String,
    pub score: f64,
}

/// Exact linear-scan cosine index. Entries keep insertion order.
#[derive(Debug, Clone)]
pub struct VectorIndex {
    dim: usize,
    entries: Vec<IndexEntry>,
    positions: HashMap<String, usize>,
}

/// Score descending, then chunk id ascending.
fn rank_order(a: &RetrievalHit, b: &RetrievalHit) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.chunk_id.cmp(&b.chunk_id))
}

impl VectorIndex {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
            positions: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn contains(&self, chunk_id: &str) -> bool {
        self.positions.contains_key(chunk_id)
    }

    pub fn add(&mut self, chunk_id: impl Into<String>, vector: EmbeddingVector) -> Result<(), RetrievalError> {
        let chunk_id = chunk_id.into();
        if vector.dim() != self.dim {
            return Err(RetrievalError::DimensionMismatch {
                expected: self.dim,
                got: vector.dim(),
            });
        }
        if self.positions.contains_key(&chunk_id) {
            return Err(RetrievalError::DuplicateChunkId(chunk_id));
        }
        self.positions.insert(chunk_id.clone(), self.entries.len());
        self.entries.push(IndexEntry { chunk_id, vector });
        Ok(())
    }

    /// Exact top-`k` by cosine similarity. Returns `min(k, len)` hits.
    pub fn retrieve(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<RetrievalHit>, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::InvalidK);
        }
        if self.entries.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        if query.dim() != self.dim {
            return Err(RetrievalError::DimensionMismatch {
                expected: self.dim,
                got: query.dim(),
            });
        }
        let mut hits: Vec<RetrievalHit> = self
            .entries
            .iter()
            .map(|e| RetrievalHit {
                chunk_id: e.chunk_id.clone(),
                score: e.vector.dot(query).clamp(-1.0, 1.0),
            })
            .collect();
        if k < hits.len() {
            hits.select_nth_unstable_by(k - 1, rank_order);
            hits.truncate(k);
        }
        hits.sort_unstable_by(rank_order);
        Ok(hits)
    }

    /// Writes `chunk_id<TAB>v1,v2,...,vD`, one entry per line.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RetrievalError> {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&e.chunk_id);
            out.push('\t');
            for (i, v) in e.vector.values().iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write!(out, "{v}").expect("write to string");
            }
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, dim: usize) -> Result<Self, RetrievalError> {
        let text = fs::read_to_string(path)?;
        let mut index = Self::new(dim);
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let bad = |message: String| RetrievalError::Parse { line: i + 1, message };
            let (id, values) = line
                .split_once('\t')
                .ok_or_else(|| bad("missing tab separator".into()))?;
            let values = values
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| bad(e.to_string()))?;
            index.add(id, EmbeddingVector::from_unit(values))?;
        }
        Ok(index)
    }
}
