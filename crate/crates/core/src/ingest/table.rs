use super::{IngestError, TableCellRecord, TableGrid};

/// Output of [`serialize_table`]: the cell records and their line rendering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SerializedTable {
    pub records: Vec<TableCellRecord>,
    pub rendered: String,
}

/// Flattens a grid into one record per non-empty cell, row-major, and renders
/// them as
///
/// ```text
/// TABLE: <table_name>
/// <table_name> | row=<row> | column=<column> | value=<value>
/// ```
///
/// Backslashes, pipes and line breaks inside fields are backslash-escaped so
/// [`parse_rendered_table`] can recover every field exactly.
pub fn serialize_table(grid: &TableGrid) -> Result<SerializedTable, IngestError> {
    grid.validate()?;
    let records: Vec<TableCellRecord> = grid
        .row_labels
        .iter()
        .zip(&grid.cells)
        .flat_map(|(row, cells)| {
            grid.column_labels
                .iter()
                .zip(cells)
                .filter(|(_, value)| !value.is_empty())
                .map(move |(column, value)| TableCellRecord {
                    table_name: grid.table_name.clone(),
                    row: row.clone(),
                    column: column.clone(),
                    value: value.clone(),
                })
        })
        .collect();

    let name = escape(&grid.table_name);
    let mut rendered = format!("TABLE: {name}");
    for r in &records {
        rendered.push('\n');
        rendered.push_str(&format!(
            "{name} | row={} | column={} | value={}",
            escape(&r.row),
            escape(&r.column),
            escape(&r.value)
        ));
    }
    Ok(SerializedTable { records, rendered })
}

/// Inverse of the rendering produced by [`serialize_table`].
pub fn parse_rendered_table(text: &str) -> Result<(String, Vec<TableCellRecord>), IngestError> {
    let bad = |line: usize, message: &str| IngestError::BundleParse {
        line,
        message: message.to_string(),
    };
    let mut lines = text.split('\n');
    let header = lines.next().unwrap_or_default();
    let name = header
        .strip_prefix("TABLE: ")
        .ok_or_else(|| bad(1, "missing 'TABLE: ' header"))?;
    let name = unescape(name).ok_or_else(|| bad(1, "bad escape in table name"))?;

    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let parts = split_unescaped_pipes(line);
        if parts.len() != 4 {
            return Err(bad(lineno, "expected 4 pipe-separated fields"));
        }
        let table = parts[0]
            .strip_suffix(' ')
            .ok_or_else(|| bad(lineno, "malformed table name field"))?;
        let inner = |s: &'_ str, key: &str| -> Option<String> {
            let s = s.strip_prefix(' ')?;
            let s = s.strip_prefix(key)?;
            unescape(s)
        };
        let row = parts[1]
            .strip_suffix(' ')
            .and_then(|s| inner(s, "row="))
            .ok_or_else(|| bad(lineno, "malformed row field"))?;
        let column = parts[2]
            .strip_suffix(' ')
            .and_then(|s| inner(s, "column="))
            .ok_or_else(|| bad(lineno, "malformed column field"))?;
        let value = inner(parts[3], "value=").ok_or_else(|| bad(lineno, "malformed value field"))?;
        let table_name = unescape(table).ok_or_else(|| bad(lineno, "bad escape in table name"))?;
        if table_name != name {
            return Err(bad(lineno, "table name differs from header"));
        }
        records.push(TableCellRecord {
            table_name,
            row,
            column,
            value,
        });
    }
    Ok((name, records))
}

fn escape(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    for c in field.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '|' => out.push_str("\\|"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            other => out.push(other),
        }
    }
    out
}

fn unescape(field: &str) -> Option<String> {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next()? {
                '\\' => out.push('\\'),
                '|' => out.push('|'),
                'n' => out.push('\n'),
                'r' => out.push('\r'),
                _ => return None,
            }
        } else {
            out.push(c);
        }
    }
    Some(out)
}

fn split_unescaped_pipes(line: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut start = 0;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        match c {
            _ if escaped => escaped = false,
            '\\' => escaped = true,
            '|' => {
                parts.push(&line[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&line[start..]);
    parts
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn womens_specific() -> TableGrid {
        TableGrid {
            table_name: "Women's Specific Insurance".into(),
            row_labels: vec![
                "Female Specific Surgery Benefits".into(),
                "Breast Reconstruction Benefits".into(),
            ],
            column_labels: vec!["Details of benefits".into()],
            cells: vec![
                vec!["Surgery involving the breast, uterus".into()],
                vec!["Breast reconstruction surgery for the breast".into()],
            ],
        }
    }

    #[test]
    fn womens_specific_insurance_table() {
        let out = serialize_table(&womens_specific()).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(
            out.records[0],
            TableCellRecord {
                table_name: "Women's Specific Insurance".into(),
                row: "Female Specific Surgery Benefits".into(),
                column: "Details of benefits".into(),
                value: "Surgery involving the breast, uterus".into(),
            }
        );
        assert_eq!(
            out.rendered,
            "TABLE: Women's Specific Insurance\n\
             Women's Specific Insurance | row=Female Specific Surgery Benefits | column=Details of benefits | value=Surgery involving the breast, uterus\n\
             Women's Specific Insurance | row=Breast Reconstruction Benefits | column=Details of benefits | value=Breast reconstruction surgery for the breast"
        );
    }

    #[test]
    fn single_empty_cell_renders_header_only() {
        let grid = TableGrid {
            table_name: "T".into(),
            row_labels: vec!["r".into()],
            column_labels: vec!["c".into()],
            cells: vec![vec![String::new()]],
        };
        let out = serialize_table(&grid).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.rendered, "TABLE: T");
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mut grid = womens_specific();
        grid.cells[1].push("extra".into());
        assert!(matches!(
            serialize_table(&grid),
            Err(IngestError::DimensionMismatch { .. })
        ));
        let mut grid = womens_specific();
        grid.cells.pop();
        assert!(matches!(
            serialize_table(&grid),
            Err(IngestError::DimensionMismatch { .. })
        ));
    }

    fn field() -> impl Strategy<Value = String> {
        prop_oneof![
            "[a-zA-Z ,.'()]{0,12}",
            "[a-z|\\\\\n ]{0,8}",
            Just(String::new()),
        ]
    }

    fn label() -> impl Strategy<Value = String> {
        "[A-Za-z|\\\\][A-Za-z |\\\\\n]{0,10}"
    }

    fn grid() -> impl Strategy<Value = TableGrid> {
        (1usize..5, 1usize..5).prop_flat_map(|(rows, cols)| {
            (
                label(),
                prop::collection::vec(label(), rows),
                prop::collection::vec(label(), cols),
                prop::collection::vec(prop::collection::vec(field(), cols), rows),
            )
                .prop_map(|(table_name, row_labels, column_labels, cells)| TableGrid {
                    table_name,
                    row_labels,
                    column_labels,
                    cells,
                })
        })
    }

    proptest! {
        #[test]
        fn record_count_matches_nonempty_cells(g in grid()) {
            let mut expected = 0;
            for r in 0..g.row_labels.len() {
                for c in 0..g.column_labels.len() {
                    if !g.cells[r][c].is_empty() {
                        expected += 1;
                    }
                }
            }
            let out = serialize_table(&g).unwrap();
            prop_assert_eq!(out.records.len(), expected);
        }

        #[test]
        fn rendered_text_parses_back(g in grid()) {
            let out = serialize_table(&g).unwrap();
            let (name, parsed) = parse_rendered_table(&out.rendered).unwrap();
            prop_assert_eq!(name, g.table_name.clone());
            let mut expected = Vec::new();
            for (r, row) in g.row_labels.iter().enumerate() {
                for (c, col) in g.column_labels.iter().enumerate() {
                    if !g.cells[r][c].is_empty() {
                        expected.push((row.clone(), col.clone(), g.cells[r][c].clone()));
                    }
                }
            }
            let got: Vec<_> = parsed.into_iter().map(|r| (r.row, r.column, r.value)).collect();
            prop_assert_eq!(got, expected);
        }
    }
}
