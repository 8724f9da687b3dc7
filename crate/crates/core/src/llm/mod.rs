//! Completion backends behind one interface: a remote chat-completion API,
//! a fixture replay keyed by prompt hash, and an echo backend for tests.

mod echo;
mod remote;
mod replay;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use echo::{question_segment, EchoBackend};
pub use remote::{RemoteBackend, RemoteConfig};
pub use replay::{record_fixture, ReplayBackend, ReplayFixture};

pub const DEFAULT_MODEL_ID: &str = "gpt-3.5-turbo";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("authentication failed: {0}")]
    AuthFailure(String),
    #[error("no recorded response for prompt hash {0}")]
    ReplayMiss(PromptHash),
    #[error("completion request timed out")]
    Timeout,
    #[error("completion request failed: {0}")]
    Transport(String),
    #[error("invalid completion request: {0}")]
    InvalidRequest(String),
    #[error("malformed completion response: {0}")]
    MalformedResponse(String),
    #[error("cannot write fixture: {0}")]
    FixtureWrite(String),
    #[error("fixture line {line}: {message}")]
    FixtureParse { line: usize, message: String },
}

/// 64-bit FNV-1a of the exact prompt bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PromptHash(pub u64);

impl PromptHash {
    pub fn of(prompt: &str) -> Self {
        Self(crate::text::fnv1a64(prompt.as_bytes()))
    }

    pub fn parse(hex: &str) -> Option<Self> {
        if hex.len() != 16 {
            return None;
        }
        u64::from_str_radix(hex, 16).ok().map(Self)
    }
}

impl fmt::Display for PromptHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl Serialize for PromptHash {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PromptHash {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        PromptHash::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("bad prompt hash '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Remote,
    Replay,
    Echo,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Remote => "remote",
            BackendKind::Replay => "replay",
            BackendKind::Echo => "echo",
        }
    }
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "remote" => Ok(BackendKind::Remote),
            "replay" => Ok(BackendKind::Replay),
            "echo" => Ok(BackendKind::Echo),
            other => Err(format!("unknown backend '{other}' (expected remote, replay or echo)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub prompt: String,
    pub model_id: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl LlmRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            model_id: DEFAULT_MODEL_ID.into(),
            temperature: 0.0,
            max_output_tokens: 512,
        }
    }

    pub fn prompt_hash(&self) -> PromptHash {
        PromptHash::of(&self.prompt)
    }

    fn validate(&self) -> Result<(), LlmError> {
        if self.prompt.is_empty() {
            return Err(LlmError::InvalidRequest("prompt is empty".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(LlmError::InvalidRequest("temperature must be >= 0".into()));
        }
        if self.max_output_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_output_tokens must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub text: String,
    pub prompt_hash: PromptHash,
    pub backend: BackendKind,
    pub latency_ms: u64,
}

pub trait LlmBackend: Send + Sync {
    fn kind(&self) -> BackendKind;

    /// Called with an already validated request.
    fn complete_validated(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError>;

    /// Upper bound on concurrent requests this backend accepts.
    fn max_in_flight(&self) -> usize {
        usize::MAX
    }
}

pub fn complete(request: &LlmRequest, backend: &dyn LlmBackend) -> Result<LlmResponse, LlmError> {
    request.validate()?;
    backend.complete_validated(request)
}
