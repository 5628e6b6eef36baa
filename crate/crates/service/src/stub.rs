//! Stub generation server speaking the HTTP backend protocol. It renders with the mock
//! renderer, so results match [`previz_core::MockBackend`] byte for byte.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine as _;
use previz_core::generation::{encode_png, mock_render, GenerateResponse, HealthResponse, ImageEncoding};
use previz_core::GenerationRequest;

/// Fault injection knobs for tests.
#[derive(Debug, Default)]
pub struct StubControl {
    /// The next `fail_next` generate calls answer 503.
    pub fail_next: AtomicU32,
    /// Requests whose id contains this marker always answer 500.
    pub poison: std::sync::Mutex<Option<String>>,
    pub calls: AtomicU64,
}

impl StubControl {
    pub fn fail_next(&self, n: u32) {
        self.fail_next.store(n, Ordering::SeqCst);
    }

    pub fn poison(&self, marker: Option<&str>) {
        *self.poison.lock().expect("stub lock") = marker.map(str::to_string);
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

async fn generate(State(control): State<Arc<StubControl>>, Json(request): Json<GenerationRequest>) -> Response {
    control.calls.fetch_add(1, Ordering::SeqCst);
    if control.fail_next.fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1)).is_ok() {
        return (StatusCode::SERVICE_UNAVAILABLE, "warming up").into_response();
    }
    let poisoned = control.poison.lock().expect("stub lock").as_ref().is_some_and(|m| request.request_id.contains(m.as_str()));
    if poisoned {
        return (StatusCode::INTERNAL_SERVER_ERROR, "injected failure").into_response();
    }
    if let Err(e) = request.validate() {
        return (StatusCode::BAD_REQUEST, e.to_string()).into_response();
    }
    let png = tokio::task::spawn_blocking(move || {
        let bytes = encode_png(&mock_render(&request));
        (request.request_id, bytes)
    })
    .await;
    match png {
        Ok((request_id, bytes)) => Json(GenerateResponse {
            request_id,
            image_base64: base64::engine::general_purpose::STANDARD.encode(bytes),
            format: ImageEncoding::Png,
        })
        .into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

async fn healthz() -> Json<HealthResponse> {
    Json(HealthResponse { status: "ok".into(), version: format!("previz-stub/{}", env!("CARGO_PKG_VERSION")) })
}

pub fn router(control: Arc<StubControl>) -> Router {
    Router::new().route("/generate", post(generate)).route("/healthz", get(healthz)).with_state(control)
}

/// Binds `addr` and serves until the process exits. Returns the bound address.
pub async fn serve(addr: SocketAddr, control: Arc<StubControl>) -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<()>)> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let handle = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, router(control)).await {
            tracing::error!("stub backend stopped: {e}");
        }
    });
    Ok((local, handle))
}
