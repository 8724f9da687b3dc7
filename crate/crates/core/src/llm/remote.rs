use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{BackendKind, LlmBackend, LlmError, LlmRequest, LlmResponse};
use crate::throttle::Throttle;

pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub api_key: String,
    pub timeout: Duration,
    /// Extra attempts after the first; capped at 2.
    pub max_retries: u32,
    /// Delay before retry `i` (0-based) is `backoff_base * 2^i`.
    pub backoff_base: Duration,
    pub max_in_flight: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: DEFAULT_ENDPOINT.into(),
            api_key: String::new(),
            timeout: Duration::from_secs(60),
            max_retries: 2,
            backoff_base: Duration::from_millis(500),
            max_in_flight: 4,
        }
    }
}

impl RemoteConfig {
    pub fn backoff_schedule(&self) -> Vec<Duration> {
        (0..self.max_retries.min(2))
            .map(|i| self.backoff_base.saturating_mul(1 << i))
            .collect()
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    content: Option<String>,
}

enum Attempt {
    Done(String),
    Retry(LlmError),
    Fatal(LlmError),
}

/// Chat-completion client; the prompt is sent as a single user message.
#[derive(Debug)]
pub struct RemoteBackend {
    config: RemoteConfig,
    http: reqwest::blocking::Client,
    throttle: Throttle,
    requests_sent: AtomicU64,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, LlmError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let throttle = Throttle::new(config.max_in_flight);
        Ok(Self {
            config,
            http,
            throttle,
            requests_sent: AtomicU64::new(0),
        })
    }

    /// HTTP requests issued, retries included.
    pub fn requests_sent(&self) -> u64 {
        self.requests_sent.load(Ordering::SeqCst)
    }

    fn attempt(&self, request: &LlmRequest) -> Attempt {
        self.requests_sent.fetch_add(1, Ordering::SeqCst);
        let body = ChatRequest {
            model: &request.model_id,
            messages: [ChatMessage {
                role: "user",
                content: &request.prompt,
            }],
            temperature: request.temperature,
            max_tokens: request.max_output_tokens,
        };
        let mut builder = self.http.post(&self.config.endpoint).json(&body);
        if !self.config.api_key.is_empty() {
            builder = builder.bearer_auth(&self.config.api_key);
        }
        let resp = match builder.send() {
            Ok(resp) => resp,
            Err(e) if e.is_timeout() => return Attempt::Retry(LlmError::Timeout),
            Err(e) => return Attempt::Retry(LlmError::Transport(e.to_string())),
        };
        let status = resp.status();
        match status.as_u16() {
            200..=299 => {}
            401 | 403 => return Attempt::Fatal(LlmError::AuthFailure(format!("endpoint returned {status}"))),
            429 => return Attempt::Retry(LlmError::RateLimited { attempts: 0 }),
            500..=599 => return Attempt::Retry(LlmError::Transport(format!("endpoint returned {status}"))),
            _ => return Attempt::Fatal(LlmError::InvalidRequest(format!("endpoint returned {status}"))),
        }
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) if e.is_timeout() => return Attempt::Retry(LlmError::Timeout),
            Err(e) => return Attempt::Retry(LlmError::Transport(e.to_string())),
        };
        let parsed: ChatResponse = match serde_json::from_str(&text) {
            Ok(p) => p,
            Err(e) => return Attempt::Fatal(LlmError::MalformedResponse(e.to_string())),
        };
        match parsed.choices.into_iter().next().and_then(|c| c.message.content) {
            Some(content) => Attempt::Done(content),
            None => Attempt::Fatal(LlmError::MalformedResponse("no choices[0].message.content".into())),
        }
    }
}

impl LlmBackend for RemoteBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Remote
    }

    fn max_in_flight(&self) -> usize {
        self.config.max_in_flight.max(1)
    }

    fn complete_validated(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        let _permit = self.throttle.acquire();
        let started = Instant::now();
        let schedule = self.config.backoff_schedule();
        let mut attempts = 0u32;
        loop {
            attempts += 1;
            match self.attempt(request) {
                Attempt::Done(text) => {
                    return Ok(LlmResponse {
                        text,
                        prompt_hash: request.prompt_hash(),
                        backend: BackendKind::Remote,
                        latency_ms: started.elapsed().as_millis() as u64,
                    })
                }
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(e) => {
                    let Some(delay) = schedule.get(attempts as usize - 1) else {
                        return Err(match e {
                            LlmError::RateLimited { .. } => LlmError::RateLimited { attempts },
                            other => other,
                        });
                    };
                    tracing::debug!(attempt = attempts, error = %e, "completion attempt failed, backing off");
                    std::thread::sleep(*delay);
                }
            }
        }
    }
}
