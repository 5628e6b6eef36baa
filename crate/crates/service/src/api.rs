//! REST API over the pipeline.
//!
//! | method | path | body |
//! |---|---|---|
//! | POST | `/scripts` | `{text}` |
//! | POST | `/match` | `{script_id, query, k?}` |
//! | POST | `/sessions` | `{script_id, group_id, settings?, seed?}` |
//! | POST | `/sessions/{id}/render` | `{force?}` |
//! | POST | `/sessions/{id}/pins` | `{pin?: [frame_id], unpin?: [frame_id]}` |
//! | POST | `/sessions/{id}/reshot` | `{settings?, lock_seed?}` |
//! | GET | `/sessions/{id}/board` | |
//! | GET | `/sessions/{id}/manifest` | |
//! | GET | `/presets` | |
//! | GET | `/healthz` | |
//! | GET | `/images/{hash}` | |
//!
//! Errors are `{code, message, locus?}` with `code` one of the [`ErrorCode`] values.
//! Mutations of one session are serialized by a per-session lock; sessions are independent.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use previz_core::prompting::Choices;
use previz_core::session::{export_manifest, Board, Clock, FrameOutcome, RenderContext, RenderReport, SessionError};
use previz_core::{
    Backend, DirectorInput, FrameId, HealthStatus, ImageStore, PromptSpec, Resolution, Script, Session, ShotGroup,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

use crate::engine::{script_id, session_id, Engine};
use crate::error::{ApiError, ErrorCode};

type SessionSlot = Arc<Mutex<Session>>;

pub struct AppState {
    pub engine: Engine,
    pub backend: Arc<dyn Backend>,
    pub store: Arc<dyn ImageStore>,
    pub clock: Arc<dyn Clock>,
    pub resolution: Resolution,
    pub default_k: usize,
    scripts: RwLock<HashMap<String, Script>>,
    matches: RwLock<HashMap<String, Vec<ShotGroup>>>,
    sessions: RwLock<HashMap<String, SessionSlot>>,
}

impl AppState {
    pub fn new(
        engine: Engine,
        backend: Arc<dyn Backend>,
        store: Arc<dyn ImageStore>,
        clock: Arc<dyn Clock>,
        resolution: Resolution,
        default_k: usize,
    ) -> Self {
        AppState {
            engine,
            backend,
            store,
            clock,
            resolution,
            default_k,
            scripts: RwLock::default(),
            matches: RwLock::default(),
            sessions: RwLock::default(),
        }
    }

    fn script(&self, id: &str) -> Result<Script, ApiError> {
        self.scripts
            .read()
            .expect("scripts lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown script `{id}`")).at("script_id"))
    }

    fn session(&self, id: &str) -> Result<SessionSlot, ApiError> {
        self.sessions
            .read()
            .expect("sessions lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown session `{id}`")))
    }

    fn context(&self) -> RenderContext<'_> {
        RenderContext {
            backend: self.backend.as_ref(),
            store: self.store.as_ref(),
            schema: &self.engine.schema,
            resolution: self.resolution,
            clock: self.clock.as_ref(),
        }
    }

    /// Runs `f` on the locked session on a blocking thread.
    async fn with_session<T, F>(self: &Arc<Self>, id: &str, f: F) -> Result<T, ApiError>
    where
        T: Send + 'static,
        F: FnOnce(&AppState, &mut Session) -> Result<T, ApiError> + Send + 'static,
    {
        let slot = self.session(id)?;
        let mut guard = slot.lock_owned().await;
        let state = Arc::clone(self);
        tokio::task::spawn_blocking(move || f(&state, &mut guard))
            .await
            .map_err(|e| ApiError::backend(format!("worker failed: {e}")))?
    }
}

fn body<T: DeserializeOwned + Default>(bytes: &Bytes) -> Result<T, ApiError> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(bytes).map_err(|e| ApiError::parse(format!("invalid request body: {e}")).at("body"))
}

fn required<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::parse(format!("invalid request body: {e}")).at("body"))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptBody {
    text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScriptResponse {
    pub script_id: String,
    pub script: Script,
}

async fn post_script(State(st): State<Arc<AppState>>, raw: Bytes) -> Result<Json<ScriptResponse>, ApiError> {
    let req: ScriptBody = required(&raw)?;
    if req.text.trim().is_empty() {
        return Err(ApiError::parse("script text is empty").at("text"));
    }
    let script = st.engine.parse(&req.text)?;
    let id = script_id(&script);
    st.scripts.write().expect("scripts lock").insert(id.clone(), script.clone());
    Ok(Json(ScriptResponse { script_id: id, script }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatchBody {
    script_id: String,
    #[serde(default)]
    query: DirectorInput,
    k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSummary {
    pub role: String,
    pub line_index: i64,
    pub shot_id: String,
    pub thumbnail_uri: String,
    pub combined_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group_id: String,
    pub movie_id: String,
    pub setting: String,
    pub mean_score: f64,
    pub candidate_count: usize,
    pub frames: Vec<FrameSummary>,
}

impl From<&ShotGroup> for GroupSummary {
    fn from(g: &ShotGroup) -> Self {
        let frames = g
            .frames()
            .enumerate()
            .map(|(i, s)| FrameSummary {
                role: if i == 0 { "establishing" } else { "dialogue" }.to_string(),
                line_index: i as i64 - 1,
                shot_id: s.record.shot_id.clone(),
                thumbnail_uri: s.record.image_uri.clone(),
                combined_score: s.combined_score,
            })
            .collect();
        GroupSummary {
            group_id: g.group_id.clone(),
            movie_id: g.scene_key.movie_id.clone(),
            setting: g.scene_key.setting.clone(),
            mean_score: g.mean_score,
            candidate_count: g.candidate_count,
            frames,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MatchResponse {
    pub groups: Vec<GroupSummary>,
    /// Set when the gallery is empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notice: Option<ApiError>,
}

async fn post_match(State(st): State<Arc<AppState>>, raw: Bytes) -> Result<Json<MatchResponse>, ApiError> {
    let req: MatchBody = required(&raw)?;
    let script = st.script(&req.script_id)?;
    let k = req.k.unwrap_or(st.default_k);
    let groups = st.engine.match_groups(&script, &req.query, k)?;
    let notice = groups
        .is_empty()
        .then(|| ApiError::new(ErrorCode::NoMatch, "no scene satisfies the fixed attributes; relax the query"));
    let summaries = groups.iter().map(GroupSummary::from).collect();
    st.matches.write().expect("matches lock").insert(req.script_id, groups);
    Ok(Json(MatchResponse { groups: summaries, notice }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionBody {
    script_id: String,
    group_id: String,
    #[serde(default)]
    settings: Choices,
    seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub frames: usize,
    pub settings: PromptSpec,
}

async fn post_session(State(st): State<Arc<AppState>>, raw: Bytes) -> Result<(StatusCode, Json<SessionCreated>), ApiError> {
    let req: SessionBody = required(&raw)?;
    let script = st.script(&req.script_id)?;
    let group = st
        .matches
        .read()
        .expect("matches lock")
        .get(&req.script_id)
        .and_then(|groups| groups.iter().find(|g| g.group_id == req.group_id).cloned())
        .ok_or_else(|| ApiError::not_found(format!("group `{}` was not offered for this script", req.group_id)).at("group_id"))?;
    let settings = st.engine.settings(&req.settings)?;
    let seed = req.seed.unwrap_or_else(rand::random);

    let base = session_id(&script, &group.group_id, seed);
    let mut sessions = st.sessions.write().expect("sessions lock");
    let id = (1..)
        .map(|n| if n == 1 { base.clone() } else { format!("{base}-{n}") })
        .find(|id| !sessions.contains_key(id))
        .expect("unbounded suffixes");
    let session = st.engine.open_session(id.clone(), script, group, settings.clone(), seed, st.clock.as_ref())?;
    let frames = session.frames.len();
    sessions.insert(id.clone(), Arc::new(Mutex::new(session)));
    tracing::info!(session = %id, frames, "session created");
    Ok((StatusCode::CREATED, Json(SessionCreated { session_id: id, frames, settings })))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RenderBody {
    force: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RenderResponse {
    pub session_id: String,
    #[serde(flatten)]
    pub report: RenderReport,
}

/// A render where every attempted frame failed is a backend error; partial failures are
/// reported per frame with status 200.
fn render_outcome(id: String, report: RenderReport) -> Result<Json<RenderResponse>, ApiError> {
    let failed: Vec<&str> = report
        .frames
        .iter()
        .filter_map(|f| match &f.outcome {
            FrameOutcome::Failed { error } => Some(error.as_str()),
            _ => None,
        })
        .collect();
    if !failed.is_empty() && report.rendered() == 0 {
        return Err(ApiError::backend(format!("all {} frames failed: {}", failed.len(), failed[0])));
    }
    Ok(Json(RenderResponse { session_id: id, report }))
}

async fn post_render(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    raw: Bytes,
) -> Result<Json<RenderResponse>, ApiError> {
    let req: RenderBody = body(&raw)?;
    let report = st.with_session(&id, move |st, s| Ok(s.render_all(&st.context(), req.force))).await?;
    render_outcome(id, report)
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PinsBody {
    pin: Vec<u32>,
    unpin: Vec<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PinsResponse {
    pub session_id: String,
    pub pinned: Vec<FrameId>,
}

fn session_error(e: SessionError) -> ApiError {
    match e {
        SessionError::UnknownFrame(id) => ApiError::not_found(format!("unknown frame {id}")).at("frame_id"),
        SessionError::NoPinnedFrames | SessionError::NotRendered | SessionError::Mismatch { .. } => {
            ApiError::conflict(e.to_string())
        }
        other => ApiError::parse(other.to_string()),
    }
}

async fn post_pins(State(st): State<Arc<AppState>>, Path(id): Path<String>, raw: Bytes) -> Result<Json<PinsResponse>, ApiError> {
    let req: PinsBody = body(&raw)?;
    let ids = |v: Vec<u32>| v.into_iter().map(FrameId).collect::<Vec<_>>();
    let (pin, unpin) = (ids(req.pin), ids(req.unpin));
    let session_id = id.clone();
    st.with_session(&id, move |_, s| {
        // Validate both lists before touching either so a bad id changes nothing.
        let mut trial = s.clone();
        trial.pin(&pin).map_err(session_error)?;
        trial.unpin(&unpin).map_err(session_error)?;
        *s = trial;
        Ok(Json(PinsResponse { session_id, pinned: s.pinned() }))
    })
    .await
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ReshotBody {
    settings: Option<Choices>,
    lock_seed: bool,
}

async fn post_reshot(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    raw: Bytes,
) -> Result<Json<RenderResponse>, ApiError> {
    let req: ReshotBody = body(&raw)?;
    let settings = req.settings.map(|c| st.engine.settings(&c)).transpose()?;
    let report = st
        .with_session(&id, move |st, s| {
            let settings = settings.unwrap_or_else(|| s.settings.clone());
            s.reshot(settings, &st.context(), req.lock_seed).map_err(session_error)
        })
        .await?;
    render_outcome(id, report)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BoardResponse {
    #[serde(flatten)]
    pub board: Board,
    /// Prefix for image hashes: `{images_base}{hash}`.
    pub images_base: String,
}

async fn get_board(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<BoardResponse>, ApiError> {
    let slot = st.session(&id)?;
    let board = slot.lock().await.board();
    Ok(Json(BoardResponse { board, images_base: "/images/".into() }))
}

async fn get_manifest(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let slot = st.session(&id)?;
    let manifest = export_manifest(&*slot.lock().await).map_err(session_error)?;
    Ok(([(header::CONTENT_TYPE, "application/json")], manifest.to_json()).into_response())
}

async fn get_presets(State(st): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let lib = &st.engine.library;
    Json(serde_json::json!({
        "presets_version": lib.presets_version,
        "backgrounds": lib.backgrounds,
        "times": lib.times,
        "light_types": lib.light_types,
        "light_directions": lib.light_directions,
        "director_styles": lib.director_styles,
        "framings": lib.framings,
        "categories": st.engine.schema.categories(),
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
    pub backend: HealthStatus,
}

async fn get_health(State(st): State<Arc<AppState>>) -> Json<Health> {
    let backend = Arc::clone(&st.backend);
    let health = tokio::task::spawn_blocking(move || backend.health_check()).await.unwrap_or_else(|e| HealthStatus {
        backend: st.backend.kind(),
        reachable: false,
        latency_ms: 0.0,
        version: None,
        detail: Some(e.to_string()),
    });
    let status = if health.reachable { "ok" } else { "degraded" };
    Json(Health { status: status.into(), version: env!("CARGO_PKG_VERSION").into(), backend: health })
}

async fn get_image(State(st): State<Arc<AppState>>, Path(hash): Path<String>) -> Result<Response, ApiError> {
    let hash = hash.strip_suffix(".png").unwrap_or(&hash).to_string();
    if hash.len() != 64 || !hash.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(ApiError::not_found(format!("no image `{hash}`")));
    }
    let store = Arc::clone(&st.store);
    let bytes = tokio::task::spawn_blocking(move || store.get(&hash))
        .await
        .map_err(|e| ApiError::backend(e.to_string()))?
        .map_err(|e| ApiError::not_found(e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

async fn fallback() -> ApiError {
    ApiError::not_found("no such endpoint")
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/scripts", post(post_script))
        .route("/match", post(post_match))
        .route("/sessions", post(post_session))
        .route("/sessions/{id}/render", post(post_render))
        .route("/sessions/{id}/pins", post(post_pins))
        .route("/sessions/{id}/reshot", post(post_reshot))
        .route("/sessions/{id}/board", get(get_board))
        .route("/sessions/{id}/manifest", get(get_manifest))
        .route("/presets", get(get_presets))
        .route("/healthz", get(get_health))
        .route("/images/{hash}", get(get_image))
        .fallback(fallback)
        .with_state(state)
}
