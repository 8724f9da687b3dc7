//! Question → retrieval → entity linking and facts → prompt → completion.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::kg::{FactOptions, KgEntity, KgError, KgFact, KgSource, LabelIndex, MentionExtractor, DEFAULT_MAX_FACTS};
use crate::llm::{complete, BackendKind, LlmBackend, LlmError, LlmRequest, PromptHash, DEFAULT_MODEL_ID};
use crate::prompt::{
    build_agnostic, build_rulebook, build_rulebook_kg, fit_budget, ContextBlock, PromptBundle, PromptError,
    PromptMode, DEFAULT_MAX_PROMPT_TOKENS,
};
use crate::retrieval::RetrievalError;

pub const DEFAULT_K: usize = 3;

/// The three answering modes: model only, model plus rulebook context, and
/// model plus rulebook context plus knowledge-graph facts.
pub type QaMode = PromptMode;

pub const ALL_MODES: [QaMode; 3] = [QaMode::Agnostic, QaMode::Rulebook, QaMode::RulebookKg];

pub fn mode_name(mode: QaMode) -> &'static str {
    match mode {
        QaMode::Agnostic => "agnostic",
        QaMode::Rulebook => "rulebook",
        QaMode::RulebookKg => "rulebook_kg",
    }
}

pub fn parse_mode(s: &str) -> Option<QaMode> {
    ALL_MODES.into_iter().find(|m| mode_name(*m) == s.trim())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Retrieval,
    Linking,
    Kg,
    Prompt,
    Llm,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Retrieval => "retrieval",
            Stage::Linking => "linking",
            Stage::Kg => "kg",
            Stage::Prompt => "prompt",
            Stage::Llm => "llm",
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("retrieval: {0}")]
    Retrieval(#[source] RetrievalError),
    #[error("linking: {0}")]
    Linking(#[source] KgError),
    #[error("kg: {0}")]
    Kg(#[source] KgError),
    #[error("prompt: {0}")]
    Prompt(#[source] PromptError),
    #[error("llm: {0}")]
    Llm(#[source] LlmError),
    #[error("llm: backend returned an empty answer")]
    EmptyAnswer,
}

impl PipelineError {
    pub fn stage(&self) -> Stage {
        match self {
            PipelineError::Retrieval(_) => Stage::Retrieval,
            PipelineError::Linking(_) => Stage::Linking,
            PipelineError::Kg(_) => Stage::Kg,
            PipelineError::Prompt(_) => Stage::Prompt,
            PipelineError::Llm(_) | PipelineError::EmptyAnswer => Stage::Llm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub k: usize,
    pub max_prompt_tokens: usize,
    pub max_facts: usize,
    pub facts: FactOptions,
    pub model_id: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            max_prompt_tokens: DEFAULT_MAX_PROMPT_TOKENS,
            max_facts: DEFAULT_MAX_FACTS,
            facts: FactOptions::default(),
            model_id: DEFAULT_MODEL_ID.into(),
            temperature: 0.0,
            max_output_tokens: 512,
        }
    }
}

/// Entity labels plus the source their facts come from.
#[derive(Debug)]
pub struct KnowledgeBase {
    pub labels: LabelIndex,
    pub source: KgSource,
}

impl KnowledgeBase {
    /// Labels and facts both from an offline fixture.
    pub fn from_fixture(fixture: crate::kg::KgFixture) -> Self {
        Self {
            labels: fixture.label_index(),
            source: KgSource::Fixture(fixture),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTimings {
    pub retrieval_ms: u64,
    pub linking_ms: u64,
    pub kg_ms: u64,
    pub prompt_ms: u64,
    pub llm_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AskResult {
    pub question: String,
    pub answer: String,
    pub mode: QaMode,
    /// Retrieved chunks; empty in agnostic mode.
    pub hits: Vec<ContextBlock>,
    /// Empty unless the mode is rulebook_kg.
    pub entities: Vec<KgEntity>,
    pub facts: Vec<KgFact>,
    pub prompt_echo: String,
    pub prompt_hash: PromptHash,
    pub backend: BackendKind,
    pub timings: StageTimings,
}

fn elapsed_ms(since: Instant) -> u64 {
    since.elapsed().as_millis() as u64
}

pub struct QaEngine {
    corpus: Corpus,
    extractor: MentionExtractor,
    knowledge: Option<KnowledgeBase>,
    backend: Arc<dyn LlmBackend>,
    config: PipelineConfig,
}

impl QaEngine {
    pub fn new(
        corpus: Corpus,
        knowledge: Option<KnowledgeBase>,
        backend: Arc<dyn LlmBackend>,
        config: PipelineConfig,
    ) -> Self {
        let extractor = extractor_for(&corpus);
        Self {
            corpus,
            extractor,
            knowledge,
            backend,
            config,
        }
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn backend(&self) -> &Arc<dyn LlmBackend> {
        &self.backend
    }

    pub fn knowledge(&self) -> Option<&KnowledgeBase> {
        self.knowledge.as_ref()
    }

    pub fn extractor(&self) -> &MentionExtractor {
        &self.extractor
    }

    /// Replaces the corpus and refreshes the corpus-derived mention weights.
    pub fn set_corpus(&mut self, corpus: Corpus) {
        self.extractor = extractor_for(&corpus);
        self.corpus = corpus;
    }

    /// Linked entities and their facts for `question`; entities are unique
    /// by URI and at most `max_facts` facts are kept.
    pub fn enrich(&self, question: &str) -> Result<(Vec<KgEntity>, Vec<KgFact>, u64, u64), PipelineError> {
        let Some(kb) = &self.knowledge else {
            return Err(PipelineError::Linking(KgError::IndexUnavailable));
        };
        let started = Instant::now();
        let mut entities = Vec::new();
        let mut seen = HashSet::new();
        for mention in self.extractor.extract(question) {
            if let Some(entity) = kb.labels.link(&mention).map_err(PipelineError::Linking)? {
                if seen.insert(entity.uri.clone()) {
                    entities.push(entity);
                }
            }
        }
        let linking_ms = elapsed_ms(started);
        let started = Instant::now();
        let mut facts = Vec::new();
        for entity in &entities {
            if facts.len() >= self.config.max_facts {
                break;
            }
            match kb.source.fetch_facts(entity, &self.config.facts) {
                Ok(found) => facts.extend(found),
                Err(KgError::EntityNotFound(uri)) => {
                    tracing::debug!(%uri, "linked entity has no facts");
                }
                Err(e) => return Err(PipelineError::Kg(e)),
            }
        }
        facts.truncate(self.config.max_facts);
        Ok((entities, facts, linking_ms, elapsed_ms(started)))
    }

    /// The fitted prompt for `question`, plus retrieval and KG outputs.
    pub fn prepare(&self, question: &str, mode: QaMode, k: usize) -> Result<Prepared, PipelineError> {
        let mut timings = StageTimings::default();
        if question.trim().is_empty() {
            return Err(PipelineError::Prompt(PromptError::EmptyQuestion));
        }
        let mut hits = Vec::new();
        let mut entities = Vec::new();
        let mut facts = Vec::new();
        if mode != QaMode::Agnostic {
            let started = Instant::now();
            hits = self.corpus.search(question, k).map_err(PipelineError::Retrieval)?;
            timings.retrieval_ms = elapsed_ms(started);
        }
        if mode == QaMode::RulebookKg {
            let (e, f, linking_ms, kg_ms) = self.enrich(question)?;
            entities = e;
            facts = f;
            timings.linking_ms = linking_ms;
            timings.kg_ms = kg_ms;
        }
        let started = Instant::now();
        let bundle = match mode {
            QaMode::Agnostic => build_agnostic(question),
            QaMode::Rulebook => build_rulebook(question, hits.clone()),
            QaMode::RulebookKg => build_rulebook_kg(question, hits.clone(), facts.iter().map(KgFact::render).collect()),
        }
        .and_then(|b| fit_budget(b, self.config.max_prompt_tokens))
        .map_err(PipelineError::Prompt)?;
        timings.prompt_ms = elapsed_ms(started);
        Ok(Prepared {
            bundle,
            hits,
            entities,
            facts,
            timings,
        })
    }

    pub fn request_for(&self, prompt: &str) -> LlmRequest {
        LlmRequest {
            prompt: prompt.to_string(),
            model_id: self.config.model_id.clone(),
            temperature: self.config.temperature,
            max_output_tokens: self.config.max_output_tokens,
        }
    }

    pub fn answer_question(&self, question: &str, mode: QaMode, k: usize) -> Result<AskResult, PipelineError> {
        let Prepared {
            bundle,
            hits,
            entities,
            facts,
            mut timings,
        } = self.prepare(question, mode, k)?;
        let started = Instant::now();
        let response = complete(&self.request_for(&bundle.rendered), self.backend.as_ref()).map_err(PipelineError::Llm)?;
        timings.llm_ms = elapsed_ms(started);
        if response.text.trim().is_empty() {
            return Err(PipelineError::EmptyAnswer);
        }
        Ok(AskResult {
            question: bundle.question.clone(),
            answer: response.text,
            mode,
            hits,
            entities,
            facts,
            prompt_hash: response.prompt_hash,
            prompt_echo: bundle.rendered,
            backend: response.backend,
            timings,
        })
    }

    /// Answers every question; failures are kept per item and the output is
    /// aligned with the input.
    pub fn batch_ask(&self, questions: &[String], mode: QaMode, k: usize) -> Vec<Result<AskResult, PipelineError>> {
        let workers = self.backend.max_in_flight().min(questions.len().max(1)).min(rayon::current_num_threads().max(4));
        let run = || {
            questions
                .par_iter()
                .map(|q| self.answer_question(q, mode, k))
                .collect()
        };
        match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            Ok(pool) => pool.install(run),
            Err(_) => questions.iter().map(|q| self.answer_question(q, mode, k)).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub bundle: PromptBundle,
    pub hits: Vec<ContextBlock>,
    pub entities: Vec<KgEntity>,
    pub facts: Vec<KgFact>,
    pub timings: StageTimings,
}

fn extractor_for(corpus: &Corpus) -> MentionExtractor {
    if corpus.chunks().is_empty() {
        MentionExtractor::default()
    } else {
        MentionExtractor::from_corpus(corpus.chunks().iter().map(|c| c.text.as_str()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{ChunkParams, SourceDocument};
    use crate::kg::{FixtureRecord, KgFixture};
    use crate::llm::{EchoBackend, ReplayBackend};
    use crate::prompt::{CONTEXT_MARKER, EXTERNAL_MARKER};
    use crate::retrieval::HashedTrigramEmbedder;

    fn corpus() -> Corpus {
        let mut c = Corpus::new(Arc::new(HashedTrigramEmbedder::default()), ChunkParams::default());
        for (id, body) in [
            ("lifestyle", "Hospitalization benefits for lifestyle-related diseases are paid per day of hospitalization."),
            ("radiation", "The radiation treatment benefit is the daily hospitalization amount times 10."),
            ("refund", "There is no refund for cancellation of the policy."),
        ] {
            c.ingest(&SourceDocument {
                doc_id: id.into(),
                title: id.into(),
                body_text: body.into(),
                tables: vec![],
            })
            .unwrap();
        }
        c
    }

    fn knowledge() -> KnowledgeBase {
        KnowledgeBase::from_fixture(KgFixture::new(vec![
            FixtureRecord {
                label: "diabetes".into(),
                uri: "http://dbpedia.org/resource/Diabetes".into(),
                abstract_text: "Diabetes is a group of metabolic disorders.".into(),
            },
            FixtureRecord {
                label: "lifestyle disease".into(),
                uri: "http://dbpedia.org/resource/Lifestyle_disease".into(),
                abstract_text: "Lifestyle diseases can lead to type II diabetes.".into(),
            },
        ]))
    }

    fn engine(backend: Arc<dyn LlmBackend>) -> QaEngine {
        QaEngine::new(corpus(), Some(knowledge()), backend, PipelineConfig::default())
    }

    #[test]
    fn agnostic_skips_retrieval_and_kg() {
        let e = QaEngine::new(
            Corpus::new(Arc::new(HashedTrigramEmbedder::default()), ChunkParams::default()),
            None,
            Arc::new(EchoBackend),
            PipelineConfig::default(),
        );
        let r = e.answer_question("Is there a refund for cancellation?", QaMode::Agnostic, 3).unwrap();
        assert!(r.hits.is_empty() && r.facts.is_empty());
        assert!(!r.prompt_echo.contains(CONTEXT_MARKER));
        assert_eq!(r.answer, "Is there a refund for cancellation?");
    }

    #[test]
    fn empty_index_in_context_modes() {
        let e = QaEngine::new(
            Corpus::new(Arc::new(HashedTrigramEmbedder::default()), ChunkParams::default()),
            None,
            Arc::new(EchoBackend),
            PipelineConfig::default(),
        );
        let err = e.answer_question("Is there a refund?", QaMode::Rulebook, 3).unwrap_err();
        assert!(matches!(err, PipelineError::Retrieval(RetrievalError::EmptyIndex)));
        assert_eq!(err.stage(), Stage::Retrieval);
    }

    #[test]
    fn kg_mode_adds_facts_after_context() {
        let e = engine(Arc::new(EchoBackend));
        let q = "He was hospitalized for a week due to diabetes. How much is his allowance?";
        let rb = e.answer_question(q, QaMode::Rulebook, 3).unwrap();
        let kg = e.answer_question(q, QaMode::RulebookKg, 3).unwrap();
        assert!(!rb.prompt_echo.contains(EXTERNAL_MARKER));
        assert_eq!(kg.facts[0].subject_label, "diabetes");
        assert!(kg.prompt_echo.find(CONTEXT_MARKER).unwrap() < kg.prompt_echo.find(EXTERNAL_MARKER).unwrap());
        for hit in &rb.hits {
            assert!(kg.prompt_echo.contains(&hit.text));
        }
        assert_eq!(rb.hits, kg.hits);
    }

    #[test]
    fn provenance_of_prompt_context() {
        let e = engine(Arc::new(EchoBackend));
        let r = e.answer_question("radiation treatment benefit", QaMode::Rulebook, 2).unwrap();
        assert_eq!(r.hits.len(), 2);
        for hit in &r.hits {
            assert_eq!(e.corpus().chunk(&hit.chunk_id).unwrap().text, hit.text);
        }
    }

    #[test]
    fn missing_kg_is_a_linking_error() {
        let e = QaEngine::new(corpus(), None, Arc::new(EchoBackend), PipelineConfig::default());
        let err = e.answer_question("diabetes benefit?", QaMode::RulebookKg, 3).unwrap_err();
        assert_eq!(err.stage(), Stage::Linking);
    }

    #[test]
    fn batch_isolates_failures_and_keeps_order() {
        let backend = Arc::new(ReplayBackend::default());
        let e = engine(backend.clone());
        let questions: Vec<String> = ["radiation benefit?", "refund?", "lifestyle diseases?"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for (i, q) in questions.iter().enumerate() {
            if i == 1 {
                continue;
            }
            let p = e.prepare(q, QaMode::Rulebook, 3).unwrap();
            backend.record(&e.request_for(&p.bundle.rendered), &format!("answer {i}")).unwrap();
        }
        let out = e.batch_ask(&questions, QaMode::Rulebook, 3);
        assert_eq!(out[0].as_ref().unwrap().answer, "answer 0");
        assert!(matches!(out[1], Err(PipelineError::Llm(LlmError::ReplayMiss(_)))));
        assert_eq!(out[2].as_ref().unwrap().answer, "answer 2");
    }

    #[test]
    fn deterministic_under_fixed_inputs() {
        let e = engine(Arc::new(EchoBackend));
        let q = "diabetes hospitalization benefit";
        let mut a = e.answer_question(q, QaMode::RulebookKg, 3).unwrap();
        let mut b = e.answer_question(q, QaMode::RulebookKg, 3).unwrap();
        a.timings = StageTimings::default();
        b.timings = StageTimings::default();
        assert_eq!(a, b);
    }

    #[test]
    fn mode_names_round_trip() {
        for m in ALL_MODES {
            assert_eq!(parse_mode(mode_name(m)), Some(m));
        }
        assert_eq!(parse_mode("gpt"), None);
    }
}
