use super::{BackendKind, LlmBackend, LlmError, LlmRequest, LlmResponse};
use crate::prompt::{INDICATOR, INDICATOR_WITH_EXTERNAL, RULEBOOK_CONTEXT_PHRASE};

/// Answers with the question segment of a QA prompt, or with the whole
/// prompt when it is not one of the QA shapes.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoBackend;

/// The quoted question inside a prompt built by [`crate::prompt`].
pub fn question_segment(prompt: &str) -> Option<&str> {
    if let Some(rest) = prompt.strip_prefix(INDICATOR_WITH_EXTERNAL).and_then(|r| r.strip_prefix(": '")) {
        return rest.find("' ---Context:").map(|end| &rest[..end]);
    }
    let rest = prompt.strip_prefix(INDICATOR)?.strip_prefix(": '")?;
    let rulebook_tail = format!("', {RULEBOOK_CONTEXT_PHRASE}:");
    if let Some(end) = rest.find(&rulebook_tail) {
        return Some(&rest[..end]);
    }
    rest.strip_suffix('\'')
}

impl LlmBackend for EchoBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Echo
    }

    fn complete_validated(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        let text = question_segment(&request.prompt)
            .filter(|q| !q.is_empty())
            .unwrap_or(&request.prompt)
            .to_string();
        Ok(LlmResponse {
            text,
            prompt_hash: request.prompt_hash(),
            backend: BackendKind::Echo,
            latency_ms: 0,
        })
    }
}
