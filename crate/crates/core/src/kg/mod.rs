//! Knowledge-graph enrichment: mention extraction, entity linking and fact
//! retrieval, from either a SPARQL endpoint or an offline fixture.

mod facts;
mod fixture;
mod link;
mod mentions;
pub mod sparql;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use facts::{
    format_external_knowledge, truncate_to_budget, KgFact, DEFAULT_FACT_BUDGET_CHARS, DEFAULT_MAX_FACTS,
};
pub use fixture::{FixtureRecord, KgFixture};
pub use link::{KgEntity, LabelIndex, LabelRecord, MatchStage, EXACT_SCORE, PREFIX_SCORE, TRIGRAM_THRESHOLD};
pub use mentions::{extract_mentions, EntityMention, MentionExtractor, DEFAULT_MAX_MENTIONS, MAX_MENTION_TOKENS};
pub use sparql::{SparqlClient, SparqlConfig};

#[derive(Debug, Error)]
pub enum KgError {
    #[error("SPARQL endpoint timed out")]
    EndpointTimeout,
    #[error("malformed SPARQL response: {0}")]
    MalformedResponse(String),
    #[error("entity not found: {0}")]
    EntityNotFound(String),
    #[error("label index unavailable")]
    IndexUnavailable,
    #[error("invalid resource identifier: {0}")]
    InvalidUri(String),
    #[error("SPARQL request failed: {0}")]
    Http(String),
    #[error("fixture line {line}: {message}")]
    FixtureParse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactSourceKind {
    Endpoint,
    Fixture,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FactOptions {
    pub predicates: Vec<String>,
    pub language: String,
    pub fact_budget_chars: usize,
}

impl Default for FactOptions {
    fn default() -> Self {
        Self {
            predicates: vec!["abstract".into()],
            language: "en".into(),
            fact_budget_chars: DEFAULT_FACT_BUDGET_CHARS,
        }
    }
}

/// Where facts come from.
#[derive(Debug)]
pub enum KgSource {
    Endpoint(SparqlClient),
    Fixture(KgFixture),
}

impl KgSource {
    pub fn kind(&self) -> FactSourceKind {
        match self {
            KgSource::Endpoint(_) => FactSourceKind::Endpoint,
            KgSource::Fixture(_) => FactSourceKind::Fixture,
        }
    }

    /// Facts for `entity`, each object truncated to the fact budget.
    pub fn fetch_facts(&self, entity: &KgEntity, options: &FactOptions) -> Result<Vec<KgFact>, KgError> {
        let mut facts = match self {
            KgSource::Endpoint(client) => client.fetch_facts(entity, &options.predicates, &options.language)?,
            KgSource::Fixture(fixture) => fixture.facts(entity, &options.predicates)?,
        };
        for f in &mut facts {
            f.object_text = truncate_to_budget(&f.object_text, options.fact_budget_chars);
        }
        facts.retain(|f| !f.object_text.is_empty());
        Ok(facts)
    }
}
