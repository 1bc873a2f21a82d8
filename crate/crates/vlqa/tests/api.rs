#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use axum::body::{to_bytes, Body};
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tokio::sync::Notify;
use tower::ServiceExt;
use vlqa::server::{router, AppState, LibrarySource};
use vlqa_core::llm::{
    ChatGateway, ChatRequest, ChatResponse, GatewayError, HttpGateway, HttpGatewayConfig, ScriptedGateway,
};
use vlqa_core::references::parse_references;
use vlqa_core::timing::Clock;
use vlqa_core::Pipeline;

use common::*;

const QUERIES: &str = "tortilla\nastronaut eating\nfood packets\ngalley\nmicrogravity crumbs";
const ANSWER: &str = "Here the crew eats [B002](30;60) after touring the galley [B002](0;30). \
                      Compare the launch [A001](0;40).";

fn scripted() -> ScriptedGateway {
    ScriptedGateway::new()
        .with_response("QUERYGEN", QUERIES)
        .with_response("ANSWERGEN", ANSWER)
}

fn state_with(gateway: Arc<dyn ChatGateway>, source: Option<LibrarySource>) -> Arc<AppState> {
    Arc::new(AppState::new(Pipeline::default().with_clock(Clock::Frozen), gateway, source))
}

fn loaded() -> (Arc<AppState>, Router) {
    let state = state_with(Arc::new(scripted()), None);
    state.install(small_library()).unwrap();
    (state.clone(), router(state, &[]))
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header(header::CONTENT_TYPE, "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    (status, to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec())
}

async fn call_json(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call(app, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}

#[tokio::test]
async fn health_reports_docs_and_generation() {
    let state = state_with(Arc::new(scripted()), None);
    let app = router(state.clone(), &[]);
    let (status, _) = call(&app, Method::GET, "/health", None).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);

    state.install(small_library()).unwrap();
    let (status, body) = call_json(&app, Method::GET, "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!({"status": "ok", "docs": 7, "generation": 1}));

    state.install(small_library()).unwrap();
    let (_, body) = call_json(&app, Method::GET, "/health", None).await;
    assert_eq!(body["generation"], 2);
}

#[tokio::test]
async fn ask_returns_grounded_answer() {
    let (_, app) = loaded();
    let (status, body) = call_json(&app, Method::POST, "/ask", Some(json!({"query": "astronauts eating"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["queries"].as_array().unwrap().len(), 5);

    let statuses: Vec<&str> = body["references"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["status"].as_str().unwrap())
        .collect();
    assert_eq!(statuses, vec!["valid", "valid", "not_retrieved"]);

    let raw = body["raw_answer"].as_str().unwrap();
    assert_eq!(raw, ANSWER);
    let reparsed = parse_references(raw).references;
    assert_eq!(reparsed.len(), statuses.len());
    for (r, p) in body["references"].as_array().unwrap().iter().zip(&reparsed) {
        assert_eq!(r["video_id"], p.video_id.as_str());
        assert_eq!(r["span"]["start"], p.span.start);
    }

    let answer = body["answer"].as_str().unwrap();
    assert!(answer.contains("[ISS Food Tour (30–60s)](vlqa://moment/B002?in=30&out=60)"));
    assert!(answer.contains("[A001](0;40)"));

    let moment_ids: Vec<&str> = body["moments"].as_array().unwrap().iter().map(|m| m["moment_id"].as_str().unwrap()).collect();
    assert_eq!(moment_ids[0], "B002-m1");
    assert!(!moment_ids.contains(&"A001-m0"));
    assert_eq!(body["moments"][0]["video_title"], "ISS Food Tour");
    for k in ["query_generation", "search", "answer_generation", "total"] {
        assert_eq!(body["timings_ms"][k], 0.0, "{k}");
    }
}

#[tokio::test]
async fn identical_requests_yield_identical_bodies() {
    let (_, app) = loaded();
    let req = json!({"query": "astronauts eating", "max_docs": 3});
    let (_, a) = call(&app, Method::POST, "/ask", Some(req.clone())).await;
    let (_, b) = call(&app, Method::POST, "/ask", Some(req)).await;
    assert_eq!(a, b);
    let body: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(body["moments"].as_array().unwrap().len(), 3);
}

#[tokio::test]
async fn ask_rejects_bad_input() {
    let (_, app) = loaded();
    for body in [json!({"query": "   "}), json!({"q": "x"}), json!({"query": "x", "max_docs": 0})] {
        let (status, err) = call_json(&app, Method::POST, "/ask", Some(body.clone())).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert!(err["reason"].is_string());
    }
}

#[tokio::test]
async fn ask_before_load_is_unavailable() {
    let app = router(state_with(Arc::new(scripted()), None), &[]);
    let (status, _) = call(&app, Method::POST, "/ask", Some(json!({"query": "x"}))).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
}

#[tokio::test]
async fn unreachable_llm_maps_to_bad_gateway() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let gw = HttpGateway::new(HttpGatewayConfig {
        endpoint: format!("http://{addr}/v1"),
        max_retries: 0,
        timeout: Duration::from_secs(2),
        ..Default::default()
    })
    .unwrap();
    let state = state_with(Arc::new(gw), None);
    state.install(small_library()).unwrap();
    let app = router(state, &[]);
    let (status, body) = call_json(&app, Method::POST, "/ask", Some(json!({"query": "launch"}))).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert_eq!(body["stage"], "query_generation");
    assert!(body["reason"].as_str().unwrap().contains("transport"));
}

#[tokio::test]
async fn answer_failure_names_its_stage() {
    let gw = ScriptedGateway::new().with_response("QUERYGEN", QUERIES);
    let state = state_with(Arc::new(gw), None);
    state.install(small_library()).unwrap();
    let (status, body) = call_json(&router(state, &[]), Method::POST, "/ask", Some(json!({"query": "x"}))).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert_eq!(body["stage"], "answer_generation");
}

#[tokio::test]
async fn search_ranks_and_truncates() {
    let (_, app) = loaded();
    let (status, body) = call_json(&app, Method::POST, "/search", Some(json!({"query": "tortilla"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body.as_array().unwrap().len(), 1);
    assert_eq!(body[0]["moment_id"], "B002-m1");

    let (_, body) = call_json(&app, Method::POST, "/search", Some(json!({"query": "astronaut", "top_k": 1}))).await;
    assert_eq!(body.as_array().unwrap().len(), 1);

    let (status, _) = call(&app, Method::POST, "/search", Some(json!({"query": ""}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn search_on_empty_index_is_empty_list() {
    let state = state_with(Arc::new(scripted()), None);
    state.install(vlqa_core::LibraryStore::new()).unwrap();
    let (status, body) = call_json(&router(state, &[]), Method::POST, "/search", Some(json!({"query": "moon"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!([]));
}

#[tokio::test]
async fn moment_detail_and_not_found() {
    let (_, app) = loaded();
    let (status, body) = call_json(&app, Method::GET, "/moments/B002-m1", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["document"]["doc_id"], "B002-m1");
    assert_eq!(body["moment"]["captions"].as_array().unwrap().len(), 3);
    assert_eq!(body["video"]["title"], "ISS Food Tour");
    assert_eq!(body["document"]["transcript_text"], "");

    for uri in ["/moments/nope", "/moments/%2E%2E%2Fetc", "/moments/B002-m1%00"] {
        let (status, _) = call(&app, Method::GET, uri, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
    }
}

#[tokio::test]
async fn reload_reads_files_and_bumps_generation() {
    let dir = tempfile::tempdir().unwrap();
    let videos = dir.path().join("videos.jsonl");
    let moments = dir.path().join("moments.jsonl");
    let lib = small_library();
    lib.write_videos_jsonl(std::fs::File::create(&videos).unwrap()).unwrap();
    lib.write_moments_jsonl(std::fs::File::create(&moments).unwrap()).unwrap();
    let state = state_with(Arc::new(scripted()), Some(LibrarySource { videos, moments, strict: true }));
    let app = router(state, &[]);

    let (status, body) = call_json(&app, Method::POST, "/reload", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["generation"], 1);
    let (_, body) = call_json(&app, Method::POST, "/reload", None).await;
    assert_eq!(body["generation"], 2);
    let (_, body) = call_json(&app, Method::GET, "/health", None).await;
    assert_eq!((body["docs"].as_u64(), body["generation"].as_u64()), (Some(7), Some(2)));
}

#[tokio::test]
async fn reload_without_paths_conflicts() {
    let (_, app) = loaded();
    let (status, _) = call(&app, Method::POST, "/reload", None).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn cors_allows_configured_origin_only() {
    let state = state_with(Arc::new(scripted()), None);
    state.install(small_library()).unwrap();
    let app = router(state, &["http://localhost:5173".to_string()]);
    let preflight = |origin: &str| {
        Request::builder()
            .method(Method::OPTIONS)
            .uri("/ask")
            .header(header::ORIGIN, origin)
            .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
            .body(Body::empty())
            .unwrap()
    };
    let ok = app.clone().oneshot(preflight("http://localhost:5173")).await.unwrap();
    assert_eq!(ok.headers()[header::ACCESS_CONTROL_ALLOW_ORIGIN], "http://localhost:5173");
    let other = app.oneshot(preflight("http://evil.example")).await.unwrap();
    assert!(other.headers().get(header::ACCESS_CONTROL_ALLOW_ORIGIN).is_none());
}

#[tokio::test]
async fn in_flight_ask_keeps_its_snapshot() {
    let gate = Arc::new(Gate::new(scripted()));
    let state = state_with(gate.clone(), None);
    state.install(small_library()).unwrap();
    let app = router(state.clone(), &[]);

    let pending = tokio::spawn({
        let app = app.clone();
        async move { call_json(&app, Method::POST, "/ask", Some(json!({"query": "astronauts eating"}))).await }
    });
    gate.entered.notified().await;
    // Swap in a library without B002 while the answer call is parked.
    state
        .install(store(vec![video("A001", "Apollo 11 Launch", 120.0)], vec![moment("A001-m0", "A001", 0.0, 120.0, Some("liftoff"), &["rocket"])]))
        .unwrap();
    gate.release.notify_one();

    let (status, body) = pending.await.unwrap();
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["references"][0]["status"], "valid");
    assert_eq!(body["moments"][0]["video_title"], "ISS Food Tour");
    let (_, health) = call_json(&app, Method::GET, "/health", None).await;
    assert_eq!((health["docs"].as_u64(), health["generation"].as_u64()), (Some(1), Some(2)));
}

/// Parks answer-generation calls until released.
struct Gate {
    inner: ScriptedGateway,
    entered: Notify,
    release: Notify,
}

impl Gate {
    fn new(inner: ScriptedGateway) -> Self {
        Self {
            inner,
            entered: Notify::new(),
            release: Notify::new(),
        }
    }
}

#[async_trait]
impl ChatGateway for Gate {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        if request.tag() == Some("ANSWERGEN") {
            self.entered.notify_one();
            self.release.notified().await;
        }
        self.inner.complete(request).await
    }
}
