//! Rulebook ingestion: document bundles in, serialized tables and retrievable
//! chunks out.

mod bundle;
mod chunk;
mod table;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bundle::{load_bundle, parse_bundle, render_bundle, save_bundle};
pub use chunk::{chunk_document, ChunkParams};
pub use table::{parse_rendered_table, serialize_table, SerializedTable};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("table '{table}': {detail}")]
    DimensionMismatch { table: String, detail: String },
    #[error("invalid chunk parameters: max_chars={max_chars} must exceed overlap_chars={overlap_chars}")]
    InvalidChunkParams { max_chars: usize, overlap_chars: usize },
    #[error("bundle parse error at line {line}: {message}")]
    BundleParse { line: usize, message: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A table as extracted from a rulebook, row and column labels kept apart
/// from the cell grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableGrid {
    pub table_name: String,
    pub row_labels: Vec<String>,
    pub column_labels: Vec<String>,
    /// Row-major, `row_labels.len()` rows of `column_labels.len()` cells.
    pub cells: Vec<Vec<String>>,
}

impl TableGrid {
    pub fn validate(&self) -> Result<(), IngestError> {
        let mismatch = |detail: String| IngestError::DimensionMismatch {
            table: self.table_name.clone(),
            detail,
        };
        if self.table_name.trim().is_empty() {
            return Err(mismatch("table_name is empty".into()));
        }
        if self.cells.len() != self.row_labels.len() {
            return Err(mismatch(format!(
                "{} cell rows for {} row labels",
                self.cells.len(),
                self.row_labels.len()
            )));
        }
        for (label, row) in self.row_labels.iter().zip(&self.cells) {
            if row.len() != self.column_labels.len() {
                return Err(mismatch(format!(
                    "row '{label}' has {} cells for {} columns",
                    row.len(),
                    self.column_labels.len()
                )));
            }
        }
        if let Some(i) = self.row_labels.iter().position(|l| l.trim().is_empty()) {
            return Err(mismatch(format!("row label {i} is empty")));
        }
        if let Some(i) = self.column_labels.iter().position(|l| l.trim().is_empty()) {
            return Err(mismatch(format!("column label {i} is empty")));
        }
        Ok(())
    }
}

/// One non-empty cell addressed by its row and column labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableCellRecord {
    pub table_name: String,
    pub row: String,
    pub column: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDocument {
    pub doc_id: String,
    pub title: String,
    pub body_text: String,
    pub tables: Vec<TableGrid>,
}

impl SourceDocument {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.doc_id.trim().is_empty() {
            return Err(IngestError::Validation("doc_id is required".into()));
        }
        if self.doc_id.contains(['#', '\t', '\n']) {
            return Err(IngestError::Validation(format!(
                "doc_id '{}' may not contain '#', tabs or newlines",
                self.doc_id
            )));
        }
        if self.body_text.is_empty() && self.tables.is_empty() {
            return Err(IngestError::Validation(format!(
                "document '{}' has neither body text nor tables",
                self.doc_id
            )));
        }
        for table in &self.tables {
            table.validate().map_err(|e| IngestError::Validation(e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkKind {
    Prose,
    Table,
}

/// A retrievable slice of a rulebook: either a window of prose or one whole
/// serialized table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub seq_no: u32,
    pub kind: ChunkKind,
    pub text: String,
    /// Character offsets `[start, end)` into the body text; prose only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub char_span: Option<(usize, usize)>,
}

pub fn chunk_id(doc_id: &str, seq_no: u32) -> String {
    format!("{doc_id}#{seq_no}")
}
