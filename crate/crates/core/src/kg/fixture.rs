use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{KgEntity, KgError, KgFact, LabelIndex, LabelRecord};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureRecord {
    pub label: String,
    pub uri: String,
    pub abstract_text: String,
}

/// Offline stand-in for the knowledge graph: `label<TAB>uri<TAB>abstract`
/// per line.
#[derive(Debug, Clone, Default)]
pub struct KgFixture {
    records: Vec<FixtureRecord>,
    by_uri: HashMap<String, usize>,
}

impl KgFixture {
    pub fn new(records: Vec<FixtureRecord>) -> Self {
        let by_uri = records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.uri.clone(), i))
            .collect();
        Self { records, by_uri }
    }

    pub fn parse(text: &str) -> Result<Self, KgError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.splitn(3, '\t').collect();
            if cols.len() != 3 || cols.iter().any(|c| c.trim().is_empty()) {
                return Err(KgError::FixtureParse {
                    line: i + 1,
                    message: "expected label<TAB>uri<TAB>abstract".into(),
                });
            }
            records.push(FixtureRecord {
                label: cols[0].to_string(),
                uri: cols[1].to_string(),
                abstract_text: cols[2].to_string(),
            });
        }
        Ok(Self::new(records))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KgError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn records(&self) -> &[FixtureRecord] {
        &self.records
    }

    pub fn label_index(&self) -> LabelIndex {
        LabelIndex::new(
            self.records
                .iter()
                .map(|r| LabelRecord {
                    label: r.label.clone(),
                    uri: r.uri.clone(),
                })
                .collect(),
        )
    }

    pub fn find_by_label(&self, label: &str) -> Option<&FixtureRecord> {
        let wanted = crate::text::normalize_label(label);
        self.records
            .iter()
            .find(|r| crate::text::normalize_label(&r.label) == wanted)
    }

    /// Facts for the requested predicates. The fixture only carries
    /// abstracts, so other predicates contribute nothing.
    pub fn facts(&self, entity: &KgEntity, predicates: &[String]) -> Result<Vec<KgFact>, KgError> {
        let record = self
            .by_uri
            .get(&entity.uri)
            .map(|&i| &self.records[i])
            .ok_or_else(|| KgError::EntityNotFound(entity.uri.clone()))?;
        Ok(predicates
            .iter()
            .filter(|p| p.as_str() == "abstract" || p.ends_with("/abstract") || p.as_str() == "dbo:abstract")
            .map(|_| KgFact {
                subject_label: record.label.clone(),
                predicate: "abstract".into(),
                object_text: record.abstract_text.clone(),
            })
            .take(1)
            .collect())
    }
}
