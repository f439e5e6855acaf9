mod common;

use std::collections::VecDeque;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::Value;

use common::fixture;
use sdoh_probe::probe::{DecodingParams, ProbeError, RetryPolicy, SubjectClient, SubjectConfig};

#[derive(Clone)]
struct Scripted {
    status: u16,
    retry_after: Option<&'static str>,
    body: String,
}

fn wire(name: &str) -> String {
    std::fs::read_to_string(fixture(&format!("wire/{name}"))).unwrap()
}

fn reply(status: u16, body: String) -> Scripted {
    Scripted { status, retry_after: None, body }
}

#[derive(Default)]
struct Script {
    replies: VecDeque<Scripted>,
    /// Served once the script runs out.
    fallback: Option<Scripted>,
    requests: Vec<Value>,
}

type Shared = Arc<Mutex<Script>>;

async fn handle(State(s): State<Shared>, headers: HeaderMap, Json(body): Json<Value>) -> Response {
    let mut s = s.lock().unwrap();
    let mut body = body;
    if let Some(auth) = headers.get("authorization") {
        body["_authorization"] = Value::String(auth.to_str().unwrap().to_string());
    }
    s.requests.push(body);
    let r = s.replies.pop_front().or_else(|| s.fallback.clone()).expect("script exhausted");
    let mut resp = (StatusCode::from_u16(r.status).unwrap(), r.body).into_response();
    resp.headers_mut().insert("content-type", "application/json".parse().unwrap());
    if let Some(ra) = r.retry_after {
        resp.headers_mut().insert("retry-after", ra.parse().unwrap());
    }
    resp
}

async fn serve(replies: Vec<Scripted>, fallback: Option<Scripted>) -> (SocketAddr, Shared) {
    let state: Shared = Arc::new(Mutex::new(Script {
        replies: replies.into(),
        fallback,
        requests: Vec::new(),
    }));
    let app = Router::new()
        .route("/v1/chat/completions", post(handle))
        .with_state(state.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    (addr, state)
}

fn client(addr: SocketAddr) -> SubjectClient {
    client_with(addr, None)
}

fn client_with(addr: SocketAddr, token_env: Option<&str>) -> SubjectClient {
    SubjectClient::new(
        SubjectConfig {
            name: "fixture".into(),
            base_url: format!("http://{addr}/v1"),
            model: "m".into(),
            token_env: token_env.map(str::to_string),
        },
        RetryPolicy { max_attempts: 5, base_delay_ms: 1, max_delay_ms: 1500, timeout_ms: 5000 },
    )
    .unwrap()
}

fn ok() -> Scripted {
    reply(200, wire("chat_completion_200.json"))
}

async fn complete(c: &SubjectClient) -> Result<String, ProbeError> {
    c.complete("Prompt", &DecodingParams::default(), Some(9)).await
}

#[tokio::test]
async fn request_body_carries_decoding_and_seed() {
    let (addr, state) = serve(vec![ok()], None).await;
    assert_eq!(complete(&client(addr)).await.unwrap(), "Valeur prédite : 5.");
    let body = &state.lock().unwrap().requests[0];
    assert_eq!(body["model"], "m");
    assert_eq!(body["top_k"], 100);
    assert_eq!(body["top_p"], 0.9);
    assert_eq!(body["temperature"], 1.0);
    assert_eq!(body["seed"], 9);
    assert_eq!(body["messages"][0]["content"], "Prompt");
}

#[tokio::test]
async fn server_errors_exhaust_retries() {
    let (addr, state) = serve(vec![], Some(reply(500, "{}".into()))).await;
    match complete(&client(addr)).await {
        Err(ProbeError::Transport { attempts, .. }) => assert_eq!(attempts, 5),
        other => panic!("{other:?}"),
    }
    assert_eq!(state.lock().unwrap().requests.len(), 5);
}

#[tokio::test]
async fn server_errors_then_success() {
    let replies = vec![reply(500, "{}".into()), reply(502, "".into()), reply(503, "".into()), reply(500, "".into()), ok()];
    let (addr, state) = serve(replies, None).await;
    assert_eq!(complete(&client(addr)).await.unwrap(), "Valeur prédite : 5.");
    assert_eq!(state.lock().unwrap().requests.len(), 5);
}

#[tokio::test]
async fn top_k_rejection_falls_back_without_top_k() {
    for (status, name) in [(400, "top_k_openai_400.json"), (422, "top_k_pydantic_422.json")] {
        let (addr, state) = serve(vec![reply(status, wire(name)), ok(), ok()], None).await;
        let c = client(addr);
        assert!(c.top_k_supported());
        complete(&c).await.unwrap();
        assert!(!c.top_k_supported());
        complete(&c).await.unwrap();
        let reqs = &state.lock().unwrap().requests;
        assert_eq!(reqs.len(), 3);
        assert!(reqs[0].get("top_k").is_some());
        assert!(reqs[1].get("top_k").is_none() && reqs[2].get("top_k").is_none());
    }
}

#[tokio::test]
async fn rate_limit_honors_retry_after() {
    let limited = Scripted { status: 429, retry_after: Some("1"), body: wire("rate_limit_429.json") };
    let (addr, _) = serve(vec![limited, ok()], None).await;
    let start = Instant::now();
    complete(&client(addr)).await.unwrap();
    assert!(start.elapsed() >= Duration::from_millis(950), "{:?}", start.elapsed());
}

#[tokio::test]
async fn persistent_rate_limit_is_reported() {
    let limited = Scripted { status: 429, retry_after: Some("0"), body: wire("rate_limit_429.json") };
    let (addr, _) = serve(vec![], Some(limited)).await;
    match complete(&client(addr)).await {
        Err(ProbeError::RateLimited { attempts, .. }) => assert_eq!(attempts, 5),
        other => panic!("{other:?}"),
    }
}

#[tokio::test]
async fn client_errors_are_not_retried() {
    let (addr, state) = serve(vec![], Some(reply(401, r#"{"error":"bad key"}"#.into()))).await;
    match complete(&client(addr)).await {
        Err(ProbeError::Rejected { status, .. }) => assert_eq!(status, 401),
        other => panic!("{other:?}"),
    }
    assert_eq!(state.lock().unwrap().requests.len(), 1);
}

#[tokio::test]
async fn malformed_bodies() {
    for body in ["not json", r#"{"choices": []}"#, r#"{"choices": [{"message": {}}]}"#] {
        let (addr, _) = serve(vec![reply(200, body.into())], None).await;
        assert!(
            matches!(complete(&client(addr)).await, Err(ProbeError::MalformedResponse(_))),
            "{body}"
        );
    }
}

#[tokio::test]
async fn text_completion_choice_is_accepted() {
    let (addr, _) = serve(vec![reply(200, wire("completion_text_200.json"))], None).await;
    assert_eq!(complete(&client(addr)).await.unwrap(), "Valeur prédite : 2.");
}

#[tokio::test]
async fn bearer_token_from_environment() {
    // SAFETY: the variable is unique to this test.
    unsafe { std::env::set_var("SDOH_PROBE_CLIENT_TEST_TOKEN", "secret") };
    let (addr, state) = serve(vec![ok()], None).await;
    complete(&client_with(addr, Some("SDOH_PROBE_CLIENT_TEST_TOKEN"))).await.unwrap();
    assert_eq!(state.lock().unwrap().requests[0]["_authorization"], "Bearer secret");
}

#[tokio::test]
async fn unreachable_endpoint_is_a_transport_failure() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    match complete(&client(addr)).await {
        Err(e @ ProbeError::Transport { .. }) => assert!(e.is_retryable()),
        other => panic!("{other:?}"),
    }
}
