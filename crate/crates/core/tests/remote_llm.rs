mod support;

use std::time::{Duration, Instant};

use serde_json::{json, Value};

use insureqa_core::llm::{complete, LlmError, RemoteBackend, RemoteConfig};
use insureqa_core::{BackendKind, LlmRequest};

use support::{Reply, StubServer};

fn chat(content: &str) -> String {
    json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]}).to_string()
}

fn backend(url: &str) -> RemoteBackend {
    RemoteBackend::new(RemoteConfig {
        endpoint: format!("{url}/v1/chat/completions"),
        api_key: "sk-test".into(),
        timeout: Duration::from_secs(5),
        backoff_base: Duration::from_millis(20),
        ..RemoteConfig::default()
    })
    .unwrap()
}

fn request() -> LlmRequest {
    LlmRequest::new("Answer the question in a short and concise way: 'Is dental care covered?'")
}

#[test]
fn sends_one_user_message_with_bearer_auth() {
    let stub = StubServer::start(vec![Reply::ok(chat("No."))]);
    let resp = complete(&request(), &backend(&stub.url)).unwrap();
    assert_eq!(resp.text, "No.");
    assert_eq!(resp.backend, BackendKind::Remote);
    assert_eq!(resp.prompt_hash, request().prompt_hash());

    let seen = stub.requests();
    assert_eq!(seen.len(), 1);
    assert!(seen[0].request_line.starts_with("POST /v1/chat/completions"));
    assert_eq!(seen[0].header("authorization"), Some("Bearer sk-test"));
    let body: Value = serde_json::from_str(&seen[0].body).unwrap();
    assert_eq!(body["model"], "gpt-3.5-turbo");
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["messages"], json!([{"role": "user", "content": request().prompt}]));
}

#[test]
fn rate_limits_are_retried_with_backoff() {
    let stub = StubServer::start(vec![Reply::status(429, ""), Reply::status(429, ""), Reply::ok(chat("Yes."))]);
    let started = Instant::now();
    let b = backend(&stub.url);
    assert_eq!(complete(&request(), &b).unwrap().text, "Yes.");
    assert_eq!(b.requests_sent(), 3);
    // 20 ms then 40 ms of backoff.
    assert!(started.elapsed() >= Duration::from_millis(60));
}

#[test]
fn persistent_rate_limit_reports_attempts() {
    let stub = StubServer::start(vec![Reply::status(429, "")]);
    let err = complete(&request(), &backend(&stub.url)).unwrap_err();
    assert!(matches!(err, LlmError::RateLimited { attempts: 3 }), "{err:?}");
    assert_eq!(stub.requests().len(), 3);
}

#[test]
fn auth_and_request_errors_fail_fast() {
    let stub = StubServer::start(vec![Reply::status(401, "{}")]);
    let err = complete(&request(), &backend(&stub.url)).unwrap_err();
    assert!(matches!(err, LlmError::AuthFailure(_)), "{err:?}");
    assert_eq!(stub.requests().len(), 1);

    let stub = StubServer::start(vec![Reply::status(400, "{}")]);
    let err = complete(&request(), &backend(&stub.url)).unwrap_err();
    assert!(matches!(err, LlmError::InvalidRequest(_)), "{err:?}");
    assert_eq!(stub.requests().len(), 1);
}

#[test]
fn server_errors_are_retried_then_surface() {
    let stub = StubServer::start(vec![Reply::status(502, ""), Reply::ok(chat("Recovered."))]);
    assert_eq!(complete(&request(), &backend(&stub.url)).unwrap().text, "Recovered.");
    assert_eq!(stub.requests().len(), 2);

    let stub = StubServer::start(vec![Reply::status(500, "")]);
    let err = complete(&request(), &backend(&stub.url)).unwrap_err();
    assert!(matches!(err, LlmError::Transport(_)), "{err:?}");
    assert_eq!(stub.requests().len(), 3);
}

#[test]
fn malformed_and_slow_responses() {
    let stub = StubServer::start(vec![Reply::ok("{\"choices\": []}")]);
    let err = complete(&request(), &backend(&stub.url)).unwrap_err();
    assert!(matches!(err, LlmError::MalformedResponse(_)), "{err:?}");

    let stub = StubServer::start(vec![Reply::ok(chat("late")).delayed(Duration::from_millis(600))]);
    let b = RemoteBackend::new(RemoteConfig {
        endpoint: stub.url.clone(),
        timeout: Duration::from_millis(100),
        max_retries: 0,
        ..RemoteConfig::default()
    })
    .unwrap();
    let err = complete(&request(), &b).unwrap_err();
    assert!(matches!(err, LlmError::Timeout), "{err:?}");
}

#[test]
fn invalid_requests_never_reach_the_network() {
    let stub = StubServer::start(vec![Reply::ok(chat("unused"))]);
    let mut cold = request();
    cold.temperature = -0.5;
    let empty = LlmRequest::new("");
    for bad in [cold, empty] {
        assert!(matches!(complete(&bad, &backend(&stub.url)), Err(LlmError::InvalidRequest(_))));
    }
    assert!(stub.requests().is_empty());
}
