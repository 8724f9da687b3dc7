//! Label search over knowledge-graph entities.
//!
//! Three stages, first hit wins: case-insensitive exact label (score 1.0),
//! label starting with the mention (0.9), then best character-trigram Jaccard
//! overlap, accepted only at or above [`TRIGRAM_THRESHOLD`].

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EntityMention, KgError};
use crate::text::{jaccard, normalize_label, trigram_set};

pub const EXACT_SCORE: f64 = 1.0;
pub const PREFIX_SCORE: f64 = 0.9;
pub const TRIGRAM_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KgEntity {
    pub uri: String,
    pub label: String,
    pub match_score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub label: String,
    pub uri: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MatchStage {
    Exact,
    Prefix,
    Trigram,
}

#[derive(Debug, Default, Clone)]
pub struct LabelIndex {
    records: Vec<LabelRecord>,
    normalized: Vec<String>,
    exact: HashMap<String, Vec<usize>>,
    /// (normalized label, record) sorted for prefix range scans.
    sorted: Vec<(String, usize)>,
    trigrams: Vec<BTreeSet<String>>,
    postings: HashMap<String, Vec<usize>>,
}

impl LabelIndex {
    pub fn new(records: Vec<LabelRecord>) -> Self {
        let normalized: Vec<String> = records.iter().map(|r| normalize_label(&r.label)).collect();
        let mut exact: HashMap<String, Vec<usize>> = HashMap::new();
        let mut postings: HashMap<String, Vec<usize>> = HashMap::new();
        let mut trigrams = Vec::with_capacity(records.len());
        for (i, norm) in normalized.iter().enumerate() {
            exact.entry(norm.clone()).or_default().push(i);
            let grams = trigram_set(norm);
            for g in &grams {
                postings.entry(g.clone()).or_default().push(i);
            }
            trigrams.push(grams);
        }
        let mut sorted: Vec<(String, usize)> = normalized.iter().cloned().zip(0..).collect();
        sorted.sort();
        Self {
            records,
            normalized,
            exact,
            sorted,
            trigrams,
            postings,
        }
    }

    /// Reads `label<TAB>uri[<TAB>...]` lines; extra columns are ignored.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, KgError> {
        let text = fs::read_to_string(path)?;
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            let (Some(label), Some(uri)) = (cols.next(), cols.next()) else {
                return Err(KgError::FixtureParse {
                    line: i + 1,
                    message: "expected label<TAB>uri".into(),
                });
            };
            records.push(LabelRecord {
                label: label.to_string(),
                uri: uri.to_string(),
            });
        }
        Ok(Self::new(records))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[LabelRecord] {
        &self.records
    }

    fn entity(&self, i: usize, score: f64) -> KgEntity {
        KgEntity {
            uri: self.records[i].uri.clone(),
            label: self.records[i].label.clone(),
            match_score: score,
        }
    }

    /// Canonical tie order among equally scored labels.
    fn tie_order(&self, a: usize, b: usize) -> Ordering {
        self.normalized[a]
            .cmp(&self.normalized[b])
            .then_with(|| self.records[a].uri.cmp(&self.records[b].uri))
    }

    pub fn link(&self, mention: &EntityMention) -> Result<Option<KgEntity>, KgError> {
        self.link_text(&mention.surface).map(|m| m.map(|(e, _)| e))
    }

    /// Links free text, also reporting which stage matched.
    pub fn link_text(&self, text: &str) -> Result<Option<(KgEntity, MatchStage)>, KgError> {
        if self.records.is_empty() {
            return Err(KgError::IndexUnavailable);
        }
        let query = normalize_label(text);
        if query.is_empty() {
            return Ok(None);
        }

        if let Some(ids) = self.exact.get(&query) {
            let best = ids
                .iter()
                .copied()
                .min_by(|&a, &b| self.tie_order(a, b))
                .expect("non-empty posting");
            return Ok(Some((self.entity(best, EXACT_SCORE), MatchStage::Exact)));
        }

        let from = self.sorted.partition_point(|(l, _)| l.as_str() < query.as_str());
        let prefix = self.sorted[from..]
            .iter()
            .take_while(|(l, _)| l.starts_with(&query))
            .map(|&(_, i)| i)
            .min_by(|&a, &b| {
                self.normalized[a]
                    .chars()
                    .count()
                    .cmp(&self.normalized[b].chars().count())
                    .then_with(|| self.tie_order(a, b))
            });
        if let Some(i) = prefix {
            return Ok(Some((self.entity(i, PREFIX_SCORE), MatchStage::Prefix)));
        }

        let grams = trigram_set(&query);
        let mut candidates: Vec<usize> = grams
            .iter()
            .filter_map(|g| self.postings.get(g))
            .flatten()
            .copied()
            .collect();
        candidates.sort_unstable();
        candidates.dedup();
        let best = candidates
            .into_iter()
            .map(|i| (jaccard(&grams, &self.trigrams[i]), i))
            .max_by(|(sa, a), (sb, b)| sa.total_cmp(sb).then_with(|| self.tie_order(*b, *a)));
        Ok(match best {
            Some((score, i)) if score >= TRIGRAM_THRESHOLD => {
                Some((self.entity(i, score), MatchStage::Trigram))
            }
            _ => None,
        })
    }
}
