//! The three prompt shapes: question only, question plus rulebook context,
//! and question plus rulebook context plus knowledge-graph facts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const INDICATOR: &str = "Answer the question in a short and concise way";
pub const INDICATOR_WITH_EXTERNAL: &str =
    "Answer the question in a short and concise way based on the context and external information";
pub const CONTEXT_MARKER: &str = "---Context:";
pub const EXTERNAL_MARKER: &str = "---External information:";
pub const RULEBOOK_CONTEXT_PHRASE: &str = "base on the context";
pub const EXTERNAL_SEPARATOR: &str = "...";
pub const DEFAULT_MAX_PROMPT_TOKENS: usize = 3000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("no rulebook context was supplied")]
    NoContext,
    #[error("budget of {budget} tokens cannot hold the indicator and question ({needed} tokens)")]
    BudgetTooSmall { budget: usize, needed: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    Agnostic,
    Rulebook,
    RulebookKg,
}

impl PromptMode {
    pub fn indicator(self) -> &'static str {
        match self {
            PromptMode::Agnostic | PromptMode::Rulebook => INDICATOR,
            PromptMode::RulebookKg => INDICATOR_WITH_EXTERNAL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextBlock {
    pub chunk_id: String,
    pub score: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub mode: PromptMode,
    pub indicator: String,
    pub question: String,
    pub context_blocks: Vec<ContextBlock>,
    pub external_blocks: Vec<String>,
    pub rendered: String,
}

/// Token estimate used for budgeting: one token per four characters,
/// rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

fn quote_all(blocks: &[ContextBlock]) -> String {
    blocks
        .iter()
        .map(|b| format!("'{}'", b.text))
        .collect::<Vec<_>>()
        .join(" ")
}

fn render(mode: PromptMode, question: &str, contexts: &[ContextBlock], external: &[String]) -> String {
    let indicator = mode.indicator();
    match mode {
        PromptMode::Agnostic => format!("{indicator}: '{question}'"),
        PromptMode::Rulebook => format!(
            "{indicator}: '{question}', {RULEBOOK_CONTEXT_PHRASE}: {}",
            quote_all(contexts)
        ),
        PromptMode::RulebookKg => format!(
            "{indicator}: '{question}' {CONTEXT_MARKER} {} {EXTERNAL_MARKER} '{}'",
            quote_all(contexts),
            external.join(EXTERNAL_SEPARATOR)
        ),
    }
}

impl PromptBundle {
    fn assemble(
        mode: PromptMode,
        question: &str,
        mut context_blocks: Vec<ContextBlock>,
        external_blocks: Vec<String>,
    ) -> Result<Self, PromptError> {
        let question = question.trim();
        if question.is_empty() {
            return Err(PromptError::EmptyQuestion);
        }
        if mode != PromptMode::Agnostic && context_blocks.is_empty() {
            return Err(PromptError::NoContext);
        }
        // Stable: equal scores keep retrieval order.
        context_blocks.sort_by(|a, b| b.score.total_cmp(&a.score));
        let rendered = render(mode, question, &context_blocks, &external_blocks);
        Ok(Self {
            mode,
            indicator: mode.indicator().to_string(),
            question: question.to_string(),
            context_blocks,
            external_blocks,
            rendered,
        })
    }

    /// Re-renders from the structured fields.
    pub fn render(&self) -> String {
        render(self.mode, &self.question, &self.context_blocks, &self.external_blocks)
    }

    pub fn estimated_tokens(&self) -> usize {
        estimate_tokens(&self.rendered)
    }
}

pub fn build_agnostic(question: &str) -> Result<PromptBundle, PromptError> {
    PromptBundle::assemble(PromptMode::Agnostic, question, Vec::new(), Vec::new())
}

pub fn build_rulebook(question: &str, contexts: Vec<ContextBlock>) -> Result<PromptBundle, PromptError> {
    PromptBundle::assemble(PromptMode::Rulebook, question, contexts, Vec::new())
}

pub fn build_rulebook_kg(
    question: &str,
    contexts: Vec<ContextBlock>,
    external: Vec<String>,
) -> Result<PromptBundle, PromptError> {
    PromptBundle::assemble(PromptMode::RulebookKg, question, contexts, external)
}

/// Drops whole blocks until the rendered prompt fits `max_tokens`: context
/// blocks lowest score first, then external blocks from the end. The
/// indicator and question are never touched.
pub fn fit_budget(bundle: PromptBundle, max_tokens: usize) -> Result<PromptBundle, PromptError> {
    let floor = estimate_tokens(&render(bundle.mode, &bundle.question, &[], &[]));
    if floor > max_tokens {
        return Err(PromptError::BudgetTooSmall {
            budget: max_tokens,
            needed: floor,
        });
    }
    if bundle.estimated_tokens() <= max_tokens {
        return Ok(bundle);
    }
    let PromptBundle {
        mode,
        indicator,
        question,
        mut context_blocks,
        mut external_blocks,
        ..
    } = bundle;
    let fits = |c: &[ContextBlock], e: &[String]| estimate_tokens(&render(mode, &question, c, e)) <= max_tokens;
    while !fits(&context_blocks, &external_blocks) {
        if context_blocks.pop().is_none() {
            external_blocks.pop();
        }
    }
    let rendered = render(mode, &question, &context_blocks, &external_blocks);
    Ok(PromptBundle {
        mode,
        indicator,
        question,
        context_blocks,
        external_blocks,
        rendered,
    })
}
