//! Synthesized question-answer pairs: generate a question per chunk, enrich
//! it with knowledge-graph facts, adjust it, answer it, then deduplicate and
//! hand the result to human reviewers.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::eval::GoldPair;
use crate::ingest::{Chunk, ChunkKind};
use crate::kg::{KgEntity, KgFact};
use crate::llm::complete;
use crate::pipeline::{PipelineError, QaEngine, Stage};
use crate::prompt::{EXTERNAL_SEPARATOR, INDICATOR, RULEBOOK_CONTEXT_PHRASE};
use crate::text::jaccard;

pub const NEAR_DUPLICATE_THRESHOLD: f64 = 0.9;
pub const REVIEW_HEADER: &str = "pair_id\tstatus\tquestion\tanswer";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("review file line {line}: {message}")]
    ReviewParse { line: usize, message: String },
    #[error("review file references unknown pair '{0}'")]
    UnknownPairId(String),
    #[error("pairs file line {line}: {message}")]
    PairsParse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    PendingReview,
    Accepted,
    Rejected,
}

impl ReviewStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ReviewStatus::PendingReview => "pending_review",
            ReviewStatus::Accepted => "accepted",
            ReviewStatus::Rejected => "rejected",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "pending_review" => Some(ReviewStatus::PendingReview),
            "accepted" => Some(ReviewStatus::Accepted),
            "rejected" => Some(ReviewStatus::Rejected),
            _ => None,
        }
    }
}

impl fmt::Display for ReviewStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A generated pair with every intermediate step kept for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthPair {
    pub pair_id: String,
    pub chunk_id: String,
    /// Final question; starts as `question_adjusted`, reviewers may edit it.
    pub question: String,
    pub answer: String,
    pub question_raw: String,
    pub question_adjusted: String,
    pub entities: Vec<KgEntity>,
    pub facts: Vec<KgFact>,
    pub status: ReviewStatus,
}

/// Prompt templates for the generation, adjustment and answer steps.
/// Placeholders: `{passage}`, `{question}`, `{external}`, `{ordinal}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthTemplates {
    pub question: String,
    pub adjust: String,
    pub answer: String,
}

impl Default for SynthTemplates {
    fn default() -> Self {
        Self {
            question: "Write one question answerable solely from the following passage: '{passage}'".into(),
            adjust: "Rewrite the question so that it can be answered from the passage, using the external \
                     information to clarify its concepts. Passage: '{passage}' External information: '{external}' \
                     Question: '{question}'"
                .into(),
            answer: format!("{INDICATOR}: '{{question}}', {RULEBOOK_CONTEXT_PHRASE}: '{{passage}}'"),
        }
    }
}

fn fill(template: &str, passage: &str, question: &str, external: &str, ordinal: usize) -> String {
    template
        .replace("{passage}", passage)
        .replace("{external}", external)
        .replace("{ordinal}", &ordinal.to_string())
        .replace("{question}", question)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthOptions {
    pub per_chunk: usize,
    pub templates: SynthTemplates,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            per_chunk: 1,
            templates: SynthTemplates::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkFailure {
    pub chunk_id: String,
    pub ordinal: usize,
    pub stage: Stage,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthOutput {
    pub pairs: Vec<SynthPair>,
    pub failures: Vec<ChunkFailure>,
}

fn synth_one(engine: &QaEngine, options: &SynthOptions, chunk: &Chunk, ordinal: usize) -> Result<SynthPair, PipelineError> {
    let ask = |prompt: String| -> Result<String, PipelineError> {
        let text = complete(&engine.request_for(&prompt), engine.backend().as_ref())
            .map_err(PipelineError::Llm)?
            .text;
        if text.trim().is_empty() {
            return Err(PipelineError::EmptyAnswer);
        }
        Ok(text.trim().to_string())
    };
    let t = &options.templates;
    let mut question_template = t.question.clone();
    if options.per_chunk > 1 && !question_template.contains("{ordinal}") {
        question_template.push_str(" Question number: {ordinal}");
    }
    let question_raw = ask(fill(&question_template, &chunk.text, "", "", ordinal))?;
    let (entities, facts) = if engine.knowledge().is_some() {
        let (entities, facts, _, _) = engine.enrich(&question_raw)?;
        (entities, facts)
    } else {
        (Vec::new(), Vec::new())
    };
    let external = facts.iter().map(KgFact::render).collect::<Vec<_>>().join(EXTERNAL_SEPARATOR);
    let question_adjusted = ask(fill(&t.adjust, &chunk.text, &question_raw, &external, ordinal))?;
    let answer = ask(fill(&t.answer, &chunk.text, &question_adjusted, &external, ordinal))?;
    Ok(SynthPair {
        pair_id: format!("{}/q{ordinal}", chunk.chunk_id),
        chunk_id: chunk.chunk_id.clone(),
        question: question_adjusted.clone(),
        answer,
        question_raw,
        question_adjusted,
        entities,
        facts,
        status: ReviewStatus::PendingReview,
    })
}

/// Runs the generation steps for every chunk of the engine's corpus. A
/// failing chunk is recorded and skipped.
pub fn generate_pairs(engine: &QaEngine, options: &SynthOptions) -> SynthOutput {
    let jobs: Vec<(&Chunk, usize)> = engine
        .corpus()
        .chunks()
        .iter()
        .flat_map(|c| (1..=options.per_chunk).map(move |i| (c, i)))
        .collect();
    let results: Vec<_> = jobs
        .par_iter()
        .map(|(chunk, ordinal)| (chunk, *ordinal, synth_one(engine, options, chunk, *ordinal)))
        .collect();
    let mut out = SynthOutput::default();
    for (chunk, ordinal, result) in results {
        match result {
            Ok(pair) => out.pairs.push(pair),
            Err(e) => out.failures.push(ChunkFailure {
                chunk_id: chunk.chunk_id.clone(),
                ordinal,
                stage: e.stage(),
                message: e.to_string(),
            }),
        }
    }
    out
}

/// Lowercased, punctuation-free token set used for near-duplicate checks.
pub fn question_tokens(question: &str) -> BTreeSet<String> {
    question
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

pub fn is_near_duplicate(a: &str, b: &str) -> bool {
    a == b || jaccard(&question_tokens(a), &question_tokens(b)) >= NEAR_DUPLICATE_THRESHOLD
}

/// Drops every pair whose question duplicates (exactly or by token-set
/// Jaccard) the question of an earlier surviving pair.
pub fn dedup(pairs: Vec<SynthPair>) -> Vec<SynthPair> {
    let mut kept: Vec<SynthPair> = Vec::with_capacity(pairs.len());
    let mut kept_tokens: Vec<BTreeSet<String>> = Vec::new();
    let mut postings: HashMap<String, Vec<usize>> = HashMap::new();
    let mut exact: HashSet<String> = HashSet::new();
    let mut kept_empty = false;
    for pair in pairs {
        if exact.contains(&pair.question) {
            continue;
        }
        let tokens = question_tokens(&pair.question);
        let duplicate = if tokens.is_empty() {
            kept_empty
        } else {
            let mut candidates: Vec<usize> = tokens
                .iter()
                .filter_map(|t| postings.get(t))
                .flatten()
                .copied()
                .collect();
            candidates.sort_unstable();
            candidates.dedup();
            candidates
                .into_iter()
                .any(|i| jaccard(&tokens, &kept_tokens[i]) >= NEAR_DUPLICATE_THRESHOLD)
        };
        if duplicate {
            continue;
        }
        kept_empty |= tokens.is_empty();
        for t in &tokens {
            postings.entry(t.clone()).or_default().push(kept.len());
        }
        exact.insert(pair.question.clone());
        kept_tokens.push(tokens);
        kept.push(pair);
    }
    kept
}

fn escape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape_field(s: &str) -> Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
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
            other => return Err(format!("bad escape '\\{}'", other.map(String::from).unwrap_or_default())),
        }
    }
    Ok(out)
}

/// Tab-separated review sheet, one pair per line after a header.
pub fn render_review(pairs: &[SynthPair]) -> String {
    let mut out = String::from(REVIEW_HEADER);
    out.push('\n');
    for p in pairs {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            escape_field(&p.pair_id),
            p.status,
            escape_field(&p.question),
            escape_field(&p.answer)
        ));
    }
    out
}

pub fn export_review(pairs: &[SynthPair], path: impl AsRef<Path>) -> Result<(), SynthError> {
    fs::write(path, render_review(pairs))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReviewRecord {
    pub pair_id: String,
    pub status: ReviewStatus,
    pub question: String,
    pub answer: String,
}

pub fn parse_review(text: &str) -> Result<Vec<ReviewRecord>, SynthError> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() || (i == 0 && line == REVIEW_HEADER) {
            continue;
        }
        let bad = |message: String| SynthError::ReviewParse { line: i + 1, message };
        let fields: Vec<&str> = line.split('\t').collect();
        let [pair_id, status, question, answer] = fields[..] else {
            return Err(bad(format!("expected 4 tab-separated fields, found {}", fields.len())));
        };
        let status = ReviewStatus::parse(status)
            .ok_or_else(|| bad(format!("status '{status}' is not pending_review, accepted or rejected")))?;
        let record = ReviewRecord {
            pair_id: unescape_field(pair_id).map_err(&bad)?,
            status,
            question: unescape_field(question).map_err(&bad)?,
            answer: unescape_field(answer).map_err(&bad)?,
        };
        if status == ReviewStatus::Accepted && (record.question.trim().is_empty() || record.answer.trim().is_empty()) {
            return Err(bad(format!("accepted pair '{}' needs a question and an answer", record.pair_id)));
        }
        if !seen.insert(record.pair_id.clone()) {
            return Err(bad(format!("pair '{}' appears twice", record.pair_id)));
        }
        records.push(record);
    }
    Ok(records)
}

/// Applies reviewer edits and statuses; pairs absent from the sheet are
/// left untouched.
pub fn apply_review(mut pairs: Vec<SynthPair>, records: &[ReviewRecord]) -> Result<Vec<SynthPair>, SynthError> {
    let pos: HashMap<&str, usize> = pairs.iter().enumerate().map(|(i, p)| (p.pair_id.as_str(), i)).collect();
    let mut updates = Vec::with_capacity(records.len());
    for r in records {
        let &i = pos
            .get(r.pair_id.as_str())
            .ok_or_else(|| SynthError::UnknownPairId(r.pair_id.clone()))?;
        updates.push((i, r));
    }
    for (i, r) in updates {
        let p = &mut pairs[i];
        p.status = r.status;
        p.question = r.question.clone();
        p.answer = r.answer.clone();
    }
    Ok(pairs)
}

pub fn import_review(path: impl AsRef<Path>, pairs: Vec<SynthPair>) -> Result<Vec<SynthPair>, SynthError> {
    let records = parse_review(&fs::read_to_string(path)?)?;
    apply_review(pairs, &records)
}

/// Accepted pairs as gold pairs. Table chunks mark `requires_table`; pairs
/// whose question drew KG facts mark `requires_external`.
pub fn accepted_gold_pairs(pairs: &[SynthPair], corpus: &Corpus) -> Vec<GoldPair> {
    pairs
        .iter()
        .filter(|p| p.status == ReviewStatus::Accepted)
        .map(|p| {
            let chunk = corpus.chunk(&p.chunk_id);
            GoldPair {
                pair_id: p.pair_id.clone(),
                question: p.question.clone(),
                gold_answer: p.answer.clone(),
                requires_table: chunk.is_some_and(|c| c.kind == ChunkKind::Table),
                requires_external: !p.facts.is_empty(),
                tags: std::iter::once("synthesized".to_string())
                    .chain(chunk.map(|c| c.doc_id.clone()))
                    .collect(),
            }
        })
        .collect()
}

pub fn render_pairs(pairs: &[SynthPair]) -> String {
    pairs
        .iter()
        .map(|p| serde_json::to_string(p).expect("pair serializes") + "\n")
        .collect()
}

pub fn parse_pairs(text: &str) -> Result<Vec<SynthPair>, SynthError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| SynthError::PairsParse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<SynthPair>, SynthError> {
    parse_pairs(&fs::read_to_string(path)?)
}

pub fn save_pairs(pairs: &[SynthPair], path: impl AsRef<Path>) -> Result<(), SynthError> {
    fs::write(path, render_pairs(pairs))?;
    Ok(())
}
