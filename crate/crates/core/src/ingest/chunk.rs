use serde::{Deserialize, Serialize};

use super::{chunk_id, serialize_table, Chunk, ChunkKind, IngestError, SourceDocument};

const SENTENCE_TERMINATORS: [char; 5] = ['.', '。', '?', '!', '\n'];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChunkParams {
    pub max_chars: usize,
    pub overlap_chars: usize,
    /// How far back from the hard limit a chunk end may snap to a sentence
    /// terminator.
    pub snap_window: usize,
}

impl Default for ChunkParams {
    fn default() -> Self {
        Self {
            max_chars: 2000,
            overlap_chars: 200,
            snap_window: 200,
        }
    }
}

impl ChunkParams {
    pub fn new(max_chars: usize, overlap_chars: usize) -> Self {
        Self {
            max_chars,
            overlap_chars,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.max_chars == 0 || self.max_chars <= self.overlap_chars {
            return Err(IngestError::InvalidChunkParams {
                max_chars: self.max_chars,
                overlap_chars: self.overlap_chars,
            });
        }
        Ok(())
    }
}

/// Splits the body into overlapping prose windows, then appends one chunk
/// per table. Every prose chunk after the first starts with exactly
/// `overlap_chars` characters copied from the end of its predecessor.
pub fn chunk_document(doc: &SourceDocument, params: ChunkParams) -> Result<Vec<Chunk>, IngestError> {
    params.validate()?;
    let mut chunks = Vec::new();
    let mut seq_no = 0u32;

    for (start, end) in prose_spans(&doc.body_text, params) {
        let text = crate::text::char_slice(&doc.body_text, start, end)
            .expect("span within body")
            .to_string();
        chunks.push(Chunk {
            chunk_id: chunk_id(&doc.doc_id, seq_no),
            doc_id: doc.doc_id.clone(),
            seq_no,
            kind: ChunkKind::Prose,
            text,
            char_span: Some((start, end)),
        });
        seq_no += 1;
    }

    for table in &doc.tables {
        let serialized = serialize_table(table)?;
        chunks.push(Chunk {
            chunk_id: chunk_id(&doc.doc_id, seq_no),
            doc_id: doc.doc_id.clone(),
            seq_no,
            kind: ChunkKind::Table,
            text: serialized.rendered,
            char_span: None,
        });
        seq_no += 1;
    }
    Ok(chunks)
}

fn prose_spans(body: &str, params: ChunkParams) -> Vec<(usize, usize)> {
    let chars: Vec<char> = body.chars().collect();
    let len = chars.len();
    let mut spans = Vec::new();
    if len == 0 {
        return spans;
    }
    let mut start = 0;
    loop {
        if len - start <= params.max_chars {
            spans.push((start, len));
            return spans;
        }
        let limit = start + params.max_chars;
        // An end must leave room for progress past the overlap.
        let floor = (start + params.overlap_chars + 1).max(limit.saturating_sub(params.snap_window));
        let end = (floor..=limit)
            .rev()
            .find(|&e| SENTENCE_TERMINATORS.contains(&chars[e - 1]))
            .unwrap_or(limit);
        spans.push((start, end));
        start = end - params.overlap_chars;
    }
}
