//! Chunk embedding and exact cosine top-k retrieval.

mod embed;
mod index;

use thiserror::Error;

pub use embed::{Embedder, EmbeddingVector, HashedTrigramEmbedder, DEFAULT_DIM};
pub use index::{IndexEntry, RetrievalHit, VectorIndex};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("text has no alphanumeric content to embed")]
    EmptyText,
    #[error("cannot normalize a zero vector")]
    ZeroVector,
    #[error("chunk id '{0}' is already indexed")]
    DuplicateChunkId(String),
    #[error("vector dimension {got} does not match index dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("index is empty")]
    EmptyIndex,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("index file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
