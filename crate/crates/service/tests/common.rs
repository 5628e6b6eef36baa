#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use previz_core::session::SystemClock;
use previz_core::{Backend, MemoryStore, MockBackend, Resolution, ScoreWeights};
use previz_service::{router, AppState, Engine};
use serde_json::Value;
use tower::ServiceExt;

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

pub fn text(name: &str) -> String {
    std::fs::read_to_string(data(name)).unwrap()
}

pub fn engine() -> Engine {
    Engine::load(&data("presets.json"), &data("beach_catalog.jsonl"), ScoreWeights::default()).unwrap()
}

pub fn app_with(backend: Arc<dyn Backend>, resolution: Resolution) -> (Router, Arc<AppState>) {
    let state = Arc::new(AppState::new(engine(), backend, Arc::new(MemoryStore::new()), Arc::new(SystemClock), resolution, 5));
    (router(Arc::clone(&state)), state)
}

pub fn app() -> Router {
    app_with(Arc::new(MockBackend), Resolution::default()).0
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call_raw(app, method, uri, body.map(|b| b.to_string())).await;
    let json = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
    (status, json)
}

pub async fn call_raw(app: &Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

/// Submits the study script, matches it and opens a session on the first group.
pub async fn study_session(app: &Router, seed: u64) -> String {
    let (s, script) = call(app, "POST", "/scripts", Some(serde_json::json!({"text": text("study_script.txt")}))).await;
    assert_eq!(s, StatusCode::OK, "{script}");
    let script_id = script["script_id"].as_str().unwrap().to_string();
    let query: Value = serde_json::from_str(&text("study_query.json")).unwrap();
    let (s, matched) = call(app, "POST", "/match", Some(serde_json::json!({"script_id": script_id, "query": query, "k": 3}))).await;
    assert_eq!(s, StatusCode::OK, "{matched}");
    let group_id = matched["groups"][0]["group_id"].as_str().unwrap().to_string();
    let settings: Value = serde_json::from_str(&text("study_settings.json")).unwrap();
    let (s, created) = call(
        app,
        "POST",
        "/sessions",
        Some(serde_json::json!({"script_id": script_id, "group_id": group_id, "settings": settings, "seed": seed})),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED, "{created}");
    created["session_id"].as_str().unwrap().to_string()
}
