//! The document-bundle text format.
//!
//! ```text
//! doc_id: medical-care-rulebook
//! title: Medical Care Insurance Rulebook
//! BODY
//! Article 1 (Purpose)
//! ...
//! TABLE
//! name: Women's Specific Insurance
//! columns: Details of benefits
//! Female Specific Surgery Benefits<TAB>Surgery involving the breast, uterus
//! ```
//!
//! Body lines that would read as a section marker (`BODY`, `TABLE`) or begin
//! with a backslash are written with a leading backslash. Table fields escape
//! tab, newline, carriage return and backslash.

use std::fs;
use std::path::Path;

use super::{IngestError, SourceDocument, TableGrid};

pub fn load_bundle(path: impl AsRef<Path>) -> Result<SourceDocument, IngestError> {
    let text = fs::read_to_string(path.as_ref())?;
    parse_bundle(&text)
}

pub fn save_bundle(doc: &SourceDocument, path: impl AsRef<Path>) -> Result<(), IngestError> {
    fs::write(path, render_bundle(doc))?;
    Ok(())
}

pub fn render_bundle(doc: &SourceDocument) -> String {
    let mut out = String::new();
    out.push_str(&format!("doc_id: {}\n", doc.doc_id));
    out.push_str(&format!("title: {}\n", escape_field(&doc.title)));
    out.push_str("BODY\n");
    for line in doc.body_text.split('\n') {
        let bare = line.strip_suffix('\r').unwrap_or(line);
        if bare == "BODY" || bare == "TABLE" || line.starts_with('\\') {
            out.push('\\');
        }
        out.push_str(line);
        out.push('\n');
    }
    for table in &doc.tables {
        out.push_str("TABLE\n");
        out.push_str(&format!("name: {}\n", escape_field(&table.table_name)));
        let columns: Vec<String> = table.column_labels.iter().map(|c| escape_field(c)).collect();
        out.push_str(&format!("columns: {}\n", columns.join("\t")));
        for (label, row) in table.row_labels.iter().zip(&table.cells) {
            let fields: Vec<String> = std::iter::once(label)
                .chain(row)
                .map(|f| escape_field(f))
                .collect();
            out.push_str(&fields.join("\t"));
            out.push('\n');
        }
    }
    out
}

enum Section {
    Header,
    Body,
    Table,
}

pub fn parse_bundle(text: &str) -> Result<SourceDocument, IngestError> {
    let mut lines: Vec<&str> = text.split('\n').collect();
    if lines.last() == Some(&"") {
        lines.pop();
    }

    let mut doc_id: Option<String> = None;
    let mut title = String::new();
    let mut body: Option<Vec<String>> = None;
    let mut tables: Vec<PendingTable> = Vec::new();
    let mut section = Section::Header;

    for (i, raw) in lines.iter().enumerate() {
        let lineno = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line == "TABLE" {
            tables.push(PendingTable::new(lineno));
            section = Section::Table;
            continue;
        }
        match section {
            Section::Header => {
                if line == "BODY" {
                    body = Some(Vec::new());
                    section = Section::Body;
                } else if line.trim().is_empty() {
                    continue;
                } else if let Some(v) = line.strip_prefix("doc_id:") {
                    doc_id = Some(v.trim().to_string());
                } else if let Some(v) = line.strip_prefix("title:") {
                    title = unescape_field(v.strip_prefix(' ').unwrap_or(v), lineno)?;
                } else {
                    return Err(parse_err(lineno, format!("unexpected header line '{line}'")));
                }
            }
            Section::Body => {
                let content = raw.strip_prefix('\\').unwrap_or(raw);
                body.get_or_insert_with(Vec::new).push(content.to_string());
            }
            Section::Table => {
                let table = tables.last_mut().expect("table section opened");
                table.push_line(line, lineno)?;
            }
        }
    }

    let doc = SourceDocument {
        doc_id: doc_id.unwrap_or_default(),
        title,
        body_text: body.map(|b| b.join("\n")).unwrap_or_default(),
        tables: tables
            .into_iter()
            .map(PendingTable::finish)
            .collect::<Result<_, _>>()?,
    };
    doc.validate()?;
    Ok(doc)
}

struct PendingTable {
    opened_at: usize,
    name: Option<String>,
    columns: Option<Vec<String>>,
    rows: Vec<String>,
    cells: Vec<Vec<String>>,
}

impl PendingTable {
    fn new(opened_at: usize) -> Self {
        Self {
            opened_at,
            name: None,
            columns: None,
            rows: Vec::new(),
            cells: Vec::new(),
        }
    }

    fn push_line(&mut self, line: &str, lineno: usize) -> Result<(), IngestError> {
        if line.trim().is_empty() {
            return Ok(());
        }
        if self.name.is_none() {
            let v = line
                .strip_prefix("name:")
                .ok_or_else(|| parse_err(lineno, "expected 'name:' after TABLE"))?;
            self.name = Some(unescape_field(v.strip_prefix(' ').unwrap_or(v), lineno)?);
            return Ok(());
        }
        if self.columns.is_none() {
            let v = line
                .strip_prefix("columns:")
                .ok_or_else(|| parse_err(lineno, "expected 'columns:' after table name"))?;
            let v = v.strip_prefix(' ').unwrap_or(v);
            self.columns = Some(
                v.split('\t')
                    .map(|c| unescape_field(c, lineno))
                    .collect::<Result<_, _>>()?,
            );
            return Ok(());
        }
        let mut fields = line.split('\t').map(|f| unescape_field(f, lineno));
        let label = fields.next().expect("split yields one field")?;
        let row: Vec<String> = fields.collect::<Result<_, _>>()?;
        let width = self.columns.as_ref().map_or(0, Vec::len);
        if row.len() != width {
            return Err(IngestError::Validation(format!(
                "line {lineno}: row '{label}' has {} cells, table declares {width} columns",
                row.len()
            )));
        }
        self.rows.push(label);
        self.cells.push(row);
        Ok(())
    }

    fn finish(self) -> Result<TableGrid, IngestError> {
        let name = self
            .name
            .ok_or_else(|| parse_err(self.opened_at, "table is missing 'name:'"))?;
        let columns = self
            .columns
            .ok_or_else(|| parse_err(self.opened_at, "table is missing 'columns:'"))?;
        Ok(TableGrid {
            table_name: name,
            row_labels: self.rows,
            column_labels: columns,
            cells: self.cells,
        })
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> IngestError {
    IngestError::BundleParse {
        line,
        message: message.into(),
    }
}

fn escape_field(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    for c in field.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            other => out.push(other),
        }
    }
    out
}

fn unescape_field(field: &str, lineno: usize) -> Result<String, IngestError> {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            _ => return Err(parse_err(lineno, "invalid escape sequence")),
        }
    }
    Ok(out)
}
