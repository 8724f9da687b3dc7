use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EvalError, GoldPair};
use crate::kg::KgFact;
use crate::llm::PromptHash;
use crate::pipeline::{AskResult, PipelineError, QaEngine, QaMode, Stage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitRef {
    pub chunk_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: Stage,
    pub message: String,
}

impl From<&PipelineError> for StageFailure {
    fn from(e: &PipelineError) -> Self {
        Self {
            stage: e.stage(),
            message: e.to_string(),
        }
    }
}

/// One (pair, mode) outcome. Holds no timings, so reruns under the replay
/// backend serialize identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub pair_id: String,
    pub question: String,
    pub mode: QaMode,
    pub answer: Option<String>,
    pub hits: Vec<HitRef>,
    pub facts: Vec<KgFact>,
    pub prompt_hash: Option<PromptHash>,
    pub error: Option<StageFailure>,
    #[serde(default)]
    pub requires_table: bool,
    #[serde(default)]
    pub requires_external: bool,
}

impl TranscriptRecord {
    pub fn from_result(
        pair_id: &str,
        question: &str,
        mode: QaMode,
        result: &Result<AskResult, PipelineError>,
    ) -> Self {
        let mut record = Self {
            pair_id: pair_id.to_string(),
            question: question.to_string(),
            mode,
            answer: None,
            hits: Vec::new(),
            facts: Vec::new(),
            prompt_hash: None,
            error: None,
            requires_table: false,
            requires_external: false,
        };
        match result {
            Ok(r) => {
                record.answer = Some(r.answer.clone());
                record.hits = r
                    .hits
                    .iter()
                    .map(|h| HitRef {
                        chunk_id: h.chunk_id.clone(),
                        score: h.score,
                    })
                    .collect();
                record.facts = r.facts.clone();
                record.prompt_hash = Some(r.prompt_hash);
            }
            Err(e) => record.error = Some(e.into()),
        }
        record
    }
}

/// Every pair under every mode, pair-major. Failures are embedded in the
/// records; the run itself never fails.
pub fn run_eval(engine: &QaEngine, dataset: &[GoldPair], modes: &[QaMode], k: usize) -> Vec<TranscriptRecord> {
    let questions: Vec<String> = dataset.iter().map(|p| p.question.clone()).collect();
    let per_mode: Vec<Vec<_>> = modes.iter().map(|&m| engine.batch_ask(&questions, m, k)).collect();
    let mut out = Vec::with_capacity(dataset.len() * modes.len());
    for (i, pair) in dataset.iter().enumerate() {
        for (j, &mode) in modes.iter().enumerate() {
            let mut record = TranscriptRecord::from_result(&pair.pair_id, &pair.question, mode, &per_mode[j][i]);
            record.requires_table = pair.requires_table;
            record.requires_external = pair.requires_external;
            out.push(record);
        }
    }
    out
}

pub fn render_transcript(records: &[TranscriptRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("transcript record serializes") + "\n")
        .collect()
}

pub fn parse_transcript(text: &str) -> Result<Vec<TranscriptRecord>, EvalError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| EvalError::Transcript {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn save_transcript(records: &[TranscriptRecord], path: impl AsRef<Path>) -> Result<(), EvalError> {
    fs::write(path, render_transcript(records))?;
    Ok(())
}

pub fn load_transcript(path: impl AsRef<Path>) -> Result<Vec<TranscriptRecord>, EvalError> {
    parse_transcript(&fs::read_to_string(path)?)
}
