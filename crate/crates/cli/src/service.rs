//! HTTP JSON API over the question-answering engine.
//!
//! Routes: `POST /v1/ask`, `POST /v1/corpus/documents`,
//! `GET /v1/corpus/stats`, `GET /v1/health`.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Query, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Semaphore;

use insureqa_core::corpus::CorpusError;
use insureqa_core::ingest::{parse_bundle, ChunkParams, SourceDocument};
use insureqa_core::kg::KgError;
use insureqa_core::llm::LlmError;
use insureqa_core::pipeline::{mode_name, parse_mode, PipelineError, QaEngine, QaMode};
use insureqa_core::prompt::PromptError;
use insureqa_core::retrieval::RetrievalError;
use insureqa_core::{AppConfig, BackendKind};

#[derive(Debug, Clone)]
pub struct ServiceOptions {
    pub default_mode: QaMode,
    pub default_k: usize,
    pub request_timeout: Duration,
    pub max_concurrent: usize,
    /// Where accepted documents are persisted; `None` keeps them in memory.
    pub persist_dir: Option<PathBuf>,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        Self {
            default_mode: QaMode::RulebookKg,
            default_k: insureqa_core::pipeline::DEFAULT_K,
            request_timeout: Duration::from_secs(30),
            max_concurrent: 16,
            persist_dir: None,
        }
    }
}

pub struct AppState {
    engine: Arc<RwLock<QaEngine>>,
    writer: Arc<Mutex<()>>,
    corpus_loaded: Arc<AtomicBool>,
    backend: BackendKind,
    options: ServiceOptions,
    permits: Arc<Semaphore>,
}

impl AppState {
    pub fn new(engine: QaEngine, options: ServiceOptions) -> Self {
        let corpus_loaded = !engine.corpus().index().is_empty();
        let backend = engine.backend().kind();
        Self {
            engine: Arc::new(RwLock::new(engine)),
            writer: Arc::new(Mutex::new(())),
            corpus_loaded: Arc::new(AtomicBool::new(corpus_loaded)),
            backend,
            permits: Arc::new(Semaphore::new(options.max_concurrent.max(1))),
            options,
        }
    }

    pub fn from_config(cfg: &AppConfig) -> anyhow::Result<Self> {
        let engine = cfg.build_engine()?;
        let options = ServiceOptions {
            default_mode: cfg.default_mode()?,
            default_k: cfg.service.default_k,
            request_timeout: Duration::from_secs(cfg.service.request_timeout_secs),
            max_concurrent: cfg.service.max_concurrent,
            persist_dir: Some(cfg.corpus.dir.clone()),
        };
        if options.default_mode != QaMode::Agnostic && engine.corpus().index().is_empty() {
            tracing::warn!(dir = %cfg.corpus.dir.display(), "corpus is empty; only agnostic questions can be answered");
        }
        Ok(Self::new(engine, options))
    }
}

#[derive(Clone, Copy)]
struct ModeTag(&'static str);

fn error_response(status: StatusCode, stage: Option<String>, message: impl Into<String>) -> Response {
    let body = match stage {
        Some(stage) => json!({ "error": message.into(), "stage": stage }),
        None => json!({ "error": message.into() }),
    };
    (status, Json(body)).into_response()
}

fn pipeline_status(e: &PipelineError) -> StatusCode {
    match e {
        PipelineError::Retrieval(RetrievalError::EmptyIndex) | PipelineError::Prompt(PromptError::NoContext) => {
            StatusCode::CONFLICT
        }
        PipelineError::Retrieval(RetrievalError::EmptyText | RetrievalError::InvalidK)
        | PipelineError::Prompt(PromptError::EmptyQuestion) => StatusCode::BAD_REQUEST,
        PipelineError::Llm(LlmError::Timeout) | PipelineError::Kg(KgError::EndpointTimeout) => {
            StatusCode::GATEWAY_TIMEOUT
        }
        _ => StatusCode::BAD_GATEWAY,
    }
}

#[derive(Deserialize)]
struct AskBody {
    question: String,
    #[serde(default)]
    mode: Option<String>,
    #[serde(default)]
    k: Option<usize>,
}

#[derive(Serialize)]
struct HitBody {
    chunk_id: String,
    score: f64,
    text: String,
}

#[derive(Serialize)]
struct FactBody {
    subject: String,
    predicate: String,
    text: String,
}

#[derive(Serialize)]
struct AskResponse {
    answer: String,
    mode: QaMode,
    hits: Vec<HitBody>,
    facts: Vec<FactBody>,
    prompt_hash: String,
    latency_ms: u64,
}

async fn ask(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let req: AskBody = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error_response(StatusCode::BAD_REQUEST, None, format!("invalid request body: {e}")),
    };
    if req.question.trim().is_empty() {
        return error_response(StatusCode::BAD_REQUEST, None, "question is empty");
    }
    let mode = match req.mode.as_deref() {
        None => state.options.default_mode,
        Some(m) => match parse_mode(m) {
            Some(mode) => mode,
            None => {
                return error_response(
                    StatusCode::BAD_REQUEST,
                    None,
                    format!("unknown mode '{m}' (expected agnostic, rulebook or rulebook_kg)"),
                )
            }
        },
    };
    let k = req.k.unwrap_or(state.options.default_k);
    if k == 0 {
        return error_response(StatusCode::BAD_REQUEST, None, "k must be at least 1");
    }
    let Ok(permit) = state.permits.clone().acquire_owned().await else {
        return error_response(StatusCode::SERVICE_UNAVAILABLE, None, "service is shutting down");
    };
    let engine = state.engine.clone();
    let started = Instant::now();
    let question = req.question;
    let task = tokio::task::spawn_blocking(move || {
        let _permit = permit;
        let engine = engine.read().unwrap_or_else(|e| e.into_inner());
        engine.answer_question(&question, mode, k)
    });
    let mut response = match tokio::time::timeout(state.options.request_timeout, task).await {
        Err(_) => error_response(StatusCode::GATEWAY_TIMEOUT, None, "request timed out"),
        Ok(Err(e)) => error_response(StatusCode::INTERNAL_SERVER_ERROR, None, format!("worker failed: {e}")),
        Ok(Ok(Err(e))) => {
            let status = pipeline_status(&e);
            let stage = status.is_server_error().then(|| e.stage().to_string());
            error_response(status, stage, e.to_string())
        }
        Ok(Ok(Ok(r))) => Json(AskResponse {
            answer: r.answer,
            mode: r.mode,
            hits: r
                .hits
                .into_iter()
                .map(|h| HitBody {
                    chunk_id: h.chunk_id,
                    score: h.score,
                    text: h.text,
                })
                .collect(),
            facts: r
                .facts
                .into_iter()
                .map(|f| FactBody {
                    subject: f.subject_label,
                    predicate: f.predicate,
                    text: f.object_text,
                })
                .collect(),
            prompt_hash: r.prompt_hash.to_string(),
            latency_ms: started.elapsed().as_millis() as u64,
        })
        .into_response(),
    };
    response.extensions_mut().insert(ModeTag(mode_name(mode)));
    response
}

#[derive(Deserialize, Default)]
struct IngestParams {
    max_chars: Option<usize>,
    overlap_chars: Option<usize>,
}

enum IngestFailure {
    Duplicate(String),
    Invalid(String),
    Internal(String),
}

async fn ingest(
    State(state): State<Arc<AppState>>,
    Query(params): Query<IngestParams>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let is_json = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.contains("json"));
    let doc: SourceDocument = if is_json {
        match serde_json::from_slice(&body) {
            Ok(d) => d,
            Err(e) => return error_response(StatusCode::BAD_REQUEST, None, format!("invalid document: {e}")),
        }
    } else {
        let text = match std::str::from_utf8(&body) {
            Ok(t) => t,
            Err(_) => return error_response(StatusCode::BAD_REQUEST, None, "bundle is not UTF-8"),
        };
        match parse_bundle(text) {
            Ok(d) => d,
            Err(e) => return error_response(StatusCode::BAD_REQUEST, None, e.to_string()),
        }
    };
    let engine = state.engine.clone();
    let writer = state.writer.clone();
    let loaded = state.corpus_loaded.clone();
    let persist = state.options.persist_dir.clone();
    let task = tokio::task::spawn_blocking(move || {
        let _writer = writer.lock().unwrap_or_else(|e| e.into_inner());
        let mut corpus = engine.read().unwrap_or_else(|e| e.into_inner()).corpus().clone();
        let defaults = corpus.chunk_params();
        let chunk_params = ChunkParams {
            max_chars: params.max_chars.unwrap_or(defaults.max_chars),
            overlap_chars: params.overlap_chars.unwrap_or(defaults.overlap_chars),
            ..defaults
        };
        let summary = corpus.ingest_with(&doc, chunk_params).map_err(|e| match e {
            CorpusError::DuplicateDocument(id) => IngestFailure::Duplicate(id),
            CorpusError::Ingest(e) => IngestFailure::Invalid(e.to_string()),
            other => IngestFailure::Internal(other.to_string()),
        })?;
        if let Some(dir) = &persist {
            corpus
                .save(dir)
                .map_err(|e| IngestFailure::Internal(format!("cannot persist corpus: {e}")))?;
        }
        let searchable = !corpus.index().is_empty();
        engine.write().unwrap_or_else(|e| e.into_inner()).set_corpus(corpus);
        loaded.store(searchable, Ordering::SeqCst);
        Ok(summary)
    });
    match task.await {
        Ok(Ok(summary)) => Json(json!({ "doc_id": summary.doc_id, "chunk_count": summary.chunk_count })).into_response(),
        Ok(Err(IngestFailure::Duplicate(id))) => {
            error_response(StatusCode::CONFLICT, None, format!("document '{id}' is already in the corpus"))
        }
        Ok(Err(IngestFailure::Invalid(m))) => error_response(StatusCode::BAD_REQUEST, None, m),
        Ok(Err(IngestFailure::Internal(m))) => error_response(StatusCode::INTERNAL_SERVER_ERROR, None, m),
        Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, None, format!("worker failed: {e}")),
    }
}

async fn stats(State(state): State<Arc<AppState>>) -> Response {
    let engine = state.engine.clone();
    match tokio::task::spawn_blocking(move || engine.read().unwrap_or_else(|e| e.into_inner()).corpus().stats()).await {
        Ok(s) => Json(s).into_response(),
        Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, None, format!("worker failed: {e}")),
    }
}

async fn health(State(state): State<Arc<AppState>>) -> Response {
    Json(json!({
        "status": "ok",
        "backend": state.backend.as_str(),
        "corpus_loaded": state.corpus_loaded.load(Ordering::SeqCst),
    }))
    .into_response()
}

/// One log line per request: route, mode, status and latency.
async fn log_requests(req: Request, next: Next) -> Response {
    let method = req.method().clone();
    let route = req.uri().path().to_string();
    let started = Instant::now();
    let response = next.run(req).await;
    let mode = response.extensions().get::<ModeTag>().map_or("-", |m| m.0);
    tracing::info!(
        target: "insureqa::request",
        %method,
        route,
        mode,
        status = response.status().as_u16(),
        latency_ms = started.elapsed().as_millis() as u64,
    );
    response
}

/// Browser clients are served from a different origin.
async fn allow_cross_origin(req: Request, next: Next) -> Response {
    let mut response = if req.method() == Method::OPTIONS {
        StatusCode::NO_CONTENT.into_response()
    } else {
        next.run(req).await
    };
    let h = response.headers_mut();
    h.insert(header::ACCESS_CONTROL_ALLOW_ORIGIN, HeaderValue::from_static("*"));
    h.insert(header::ACCESS_CONTROL_ALLOW_METHODS, HeaderValue::from_static("GET, POST, OPTIONS"));
    h.insert(header::ACCESS_CONTROL_ALLOW_HEADERS, HeaderValue::from_static("content-type"));
    response
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/ask", post(ask))
        .route("/v1/corpus/documents", post(ingest))
        .route("/v1/corpus/stats", get(stats))
        .route("/v1/health", get(health))
        .layer(middleware::from_fn(allow_cross_origin))
        .layer(middleware::from_fn(log_requests))
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}
