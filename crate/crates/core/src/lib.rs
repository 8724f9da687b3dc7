//! Question answering over insurance rulebooks, enriched with retrieved
//! rulebook passages and knowledge-graph facts.

pub mod config;
pub mod corpus;
pub mod eval;
pub mod ingest;
pub mod kg;
pub mod llm;
pub mod pipeline;
pub mod prompt;
pub mod retrieval;
pub mod synth;
pub mod text;
pub mod throttle;

pub use config::{AppConfig, ConfigError};
pub use corpus::{Corpus, CorpusError, CorpusStats, DocumentSummary};
pub use eval::{Accuracy, GoldPair, Judgment, Percent, Report, TranscriptRecord};
pub use ingest::{Chunk, ChunkKind, ChunkParams, SourceDocument, TableGrid};
pub use kg::{EntityMention, KgEntity, KgFact};
pub use llm::{BackendKind, LlmBackend, LlmRequest, LlmResponse, PromptHash};
pub use pipeline::{AskResult, PipelineError, QaEngine, QaMode, Stage};
pub use prompt::{ContextBlock, PromptBundle};
pub use retrieval::{EmbeddingVector, RetrievalHit};
pub use synth::{ReviewStatus, SynthPair};
