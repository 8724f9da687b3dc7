use serde::{Deserialize, Serialize};

pub const DEFAULT_FACT_BUDGET_CHARS: usize = 600;
pub const DEFAULT_MAX_FACTS: usize = 3;
const ELLIPSIS: &str = "...";

/// A (subject, predicate, object) statement rendered for a prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KgFact {
    pub subject_label: String,
    pub predicate: String,
    pub object_text: String,
}

impl KgFact {
    /// `<subject_label> | <predicate> | <object_text>`
    pub fn render(&self) -> String {
        format!("{} | {} | {}", self.subject_label, self.predicate, self.object_text)
    }
}

/// Joins rendered facts with `...`; no facts renders as the empty string.
pub fn format_external_knowledge(facts: &[KgFact]) -> String {
    facts.iter().map(KgFact::render).collect::<Vec<_>>().join("...")
}

/// Cuts `text` to at most `budget` characters. When a cut is needed it
/// happens at the last word boundary that leaves room for a trailing `...`.
pub fn truncate_to_budget(text: &str, budget: usize) -> String {
    let text = text.trim();
    if text.chars().count() <= budget {
        return text.to_string();
    }
    let room = budget.saturating_sub(ELLIPSIS.len());
    let prefix: String = text.chars().take(room).collect();
    let next_is_space = text.chars().nth(room).is_some_and(char::is_whitespace);
    let cut = if next_is_space {
        prefix.trim_end()
    } else {
        match prefix.rfind(char::is_whitespace) {
            Some(i) => prefix[..i].trim_end(),
            None => prefix.as_str(),
        }
    };
    format!("{cut}{ELLIPSIS}")
}
