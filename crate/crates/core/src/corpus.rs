//! A corpus directory: ingested documents, their chunks and the vector
//! index over those chunks.
//!
//! Layout: `documents.jsonl`, `chunks.jsonl`, `index.tsv` and
//! `manifest.json` (embedding dimension and chunk parameters).

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{chunk_document, Chunk, ChunkParams, IngestError, SourceDocument};
use crate::prompt::ContextBlock;
use crate::retrieval::{Embedder, RetrievalError, VectorIndex};

pub const DOCUMENTS_FILE: &str = "documents.jsonl";
pub const CHUNKS_FILE: &str = "chunks.jsonl";
pub const INDEX_FILE: &str = "index.tsv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("document '{0}' is already in the corpus")]
    DuplicateDocument(String),
    #[error("{file} line {line}: {message}")]
    Format { file: String, line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentSummary {
    pub doc_id: String,
    pub title: String,
    pub tables: usize,
    pub chunk_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    pub documents: usize,
    pub chunks: usize,
    pub tables: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    dim: usize,
    chunk_params: ChunkParams,
}

#[derive(Clone)]
pub struct Corpus {
    embedder: Arc<dyn Embedder>,
    params: ChunkParams,
    documents: Vec<DocumentSummary>,
    chunks: Vec<Chunk>,
    chunk_pos: HashMap<String, usize>,
    index: VectorIndex,
}

impl std::fmt::Debug for Corpus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Corpus")
            .field("params", &self.params)
            .field("stats", &self.stats())
            .finish_non_exhaustive()
    }
}

impl Corpus {
    pub fn new(embedder: Arc<dyn Embedder>, params: ChunkParams) -> Self {
        let index = VectorIndex::new(embedder.dim());
        Self {
            embedder,
            params,
            documents: Vec::new(),
            chunks: Vec::new(),
            chunk_pos: HashMap::new(),
            index,
        }
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    pub fn chunk_params(&self) -> ChunkParams {
        self.params
    }

    pub fn documents(&self) -> &[DocumentSummary] {
        &self.documents
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn chunk(&self, chunk_id: &str) -> Option<&Chunk> {
        self.chunk_pos.get(chunk_id).map(|&i| &self.chunks[i])
    }

    pub fn index(&self) -> &VectorIndex {
        &self.index
    }

    pub fn contains_document(&self, doc_id: &str) -> bool {
        self.documents.iter().any(|d| d.doc_id == doc_id)
    }

    pub fn stats(&self) -> CorpusStats {
        CorpusStats {
            documents: self.documents.len(),
            chunks: self.chunks.len(),
            tables: self.documents.iter().map(|d| d.tables).sum(),
        }
    }

    /// Chunks, embeds and indexes `doc`. Everything is computed before the
    /// corpus is touched, so a failure leaves it unchanged.
    pub fn ingest(&mut self, doc: &SourceDocument) -> Result<DocumentSummary, CorpusError> {
        self.ingest_with(doc, self.params)
    }

    pub fn ingest_with(&mut self, doc: &SourceDocument, params: ChunkParams) -> Result<DocumentSummary, CorpusError> {
        doc.validate()?;
        if self.contains_document(&doc.doc_id) {
            return Err(CorpusError::DuplicateDocument(doc.doc_id.clone()));
        }
        let chunks = chunk_document(doc, params)?;
        let embedder = &self.embedder;
        let vectors: Vec<_> = chunks
            .par_iter()
            .map(|c| match embedder.embed(&c.text) {
                Ok(v) => Ok(Some(v)),
                // Punctuation-only prose stays in the corpus but is not searchable.
                Err(RetrievalError::EmptyText) => Ok(None),
                Err(e) => Err(e),
            })
            .collect::<Result<_, _>>()?;
        let mut index = self.index.clone();
        for (chunk, vector) in chunks.iter().zip(vectors) {
            if let Some(v) = vector {
                index.add(chunk.chunk_id.clone(), v)?;
            }
        }
        let summary = DocumentSummary {
            doc_id: doc.doc_id.clone(),
            title: doc.title.clone(),
            tables: doc.tables.len(),
            chunk_count: chunks.len(),
        };
        self.index = index;
        for chunk in chunks {
            self.chunk_pos.insert(chunk.chunk_id.clone(), self.chunks.len());
            self.chunks.push(chunk);
        }
        self.documents.push(summary.clone());
        Ok(summary)
    }

    /// Top-`k` chunks for `question`, with their text.
    pub fn search(&self, question: &str, k: usize) -> Result<Vec<ContextBlock>, RetrievalError> {
        if self.index.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        let query = self.embedder.embed(question)?;
        let hits = self.index.retrieve(&query, k)?;
        Ok(hits
            .into_iter()
            .map(|h| ContextBlock {
                text: self.chunk(&h.chunk_id).map(|c| c.text.clone()).unwrap_or_default(),
                chunk_id: h.chunk_id,
                score: h.score,
            })
            .collect())
    }

    /// Rebuilds the index from the stored chunks.
    pub fn reindex(&mut self) -> Result<(), RetrievalError> {
        let embedder = &self.embedder;
        let vectors: Vec<_> = self
            .chunks
            .par_iter()
            .map(|c| match embedder.embed(&c.text) {
                Ok(v) => Ok(Some(v)),
                Err(RetrievalError::EmptyText) => Ok(None),
                Err(e) => Err(e),
            })
            .collect::<Result<_, _>>()?;
        let mut index = VectorIndex::new(embedder.dim());
        for (chunk, vector) in self.chunks.iter().zip(vectors) {
            if let Some(v) = vector {
                index.add(chunk.chunk_id.clone(), v)?;
            }
        }
        self.index = index;
        Ok(())
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), CorpusError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        write_jsonl(&dir.join(DOCUMENTS_FILE), &self.documents)?;
        write_jsonl(&dir.join(CHUNKS_FILE), &self.chunks)?;
        self.index.save(dir.join(INDEX_FILE))?;
        let manifest = Manifest {
            dim: self.embedder.dim(),
            chunk_params: self.params,
        };
        fs::write(
            dir.join(MANIFEST_FILE),
            serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
        )?;
        Ok(())
    }

    /// Opens a corpus directory. A directory without corpus files (or a
    /// missing one) yields an empty corpus.
    pub fn open(dir: impl AsRef<Path>, embedder: Arc<dyn Embedder>) -> Result<Self, CorpusError> {
        let dir = dir.as_ref();
        let manifest_path = dir.join(MANIFEST_FILE);
        let params = if manifest_path.exists() {
            let manifest: Manifest =
                serde_json::from_str(&fs::read_to_string(&manifest_path)?).map_err(|e| CorpusError::Format {
                    file: MANIFEST_FILE.into(),
                    line: e.line(),
                    message: e.to_string(),
                })?;
            if manifest.dim != embedder.dim() {
                return Err(RetrievalError::DimensionMismatch {
                    expected: embedder.dim(),
                    got: manifest.dim,
                }
                .into());
            }
            manifest.chunk_params
        } else {
            ChunkParams::default()
        };
        let mut corpus = Corpus::new(embedder, params);
        let chunks_path = dir.join(CHUNKS_FILE);
        if !chunks_path.exists() {
            return Ok(corpus);
        }
        corpus.documents = read_jsonl(&dir.join(DOCUMENTS_FILE), DOCUMENTS_FILE)?;
        let chunks: Vec<Chunk> = read_jsonl(&chunks_path, CHUNKS_FILE)?;
        let mut seen = HashSet::new();
        for (i, chunk) in chunks.into_iter().enumerate() {
            if !seen.insert(chunk.chunk_id.clone()) {
                return Err(CorpusError::Format {
                    file: CHUNKS_FILE.into(),
                    line: i + 1,
                    message: format!("duplicate chunk id '{}'", chunk.chunk_id),
                });
            }
            corpus.chunk_pos.insert(chunk.chunk_id.clone(), corpus.chunks.len());
            corpus.chunks.push(chunk);
        }
        let index_path = dir.join(INDEX_FILE);
        if index_path.exists() {
            let index = VectorIndex::load(&index_path, corpus.embedder.dim())?;
            if let Some((line, e)) = index
                .entries()
                .iter()
                .enumerate()
                .find(|(_, e)| !corpus.chunk_pos.contains_key(&e.chunk_id))
            {
                return Err(CorpusError::Format {
                    file: INDEX_FILE.into(),
                    line: line + 1,
                    message: format!("indexed chunk '{}' is not in {CHUNKS_FILE}", e.chunk_id),
                });
            }
            corpus.index = index;
        } else {
            corpus.reindex()?;
        }
        Ok(corpus)
    }
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CorpusError> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut out, row).expect("row serializes");
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path, name: &str) -> Result<Vec<T>, CorpusError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    fs::read_to_string(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CorpusError::Format {
                file: name.into(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
