use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use atfqoe_core::pairing::VideoPair;
use atfqoe_core::records::SessionStatus;
use atfqoe_core::Choice;
use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::study::{Study, StudyError};

pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| {
        std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
    })
}

pub struct AppState {
    pub study: Mutex<Study>,
    pub clock: Clock,
    pub frames_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideDescriptor {
    pub source_id: String,
    pub manifest_url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDescriptor {
    pub pair_id: String,
    pub left: SideDescriptor,
    pub right: SideDescriptor,
}

impl PairDescriptor {
    /// Deliberately omits the honeypot flag and answer.
    pub fn of(pair: &VideoPair) -> Self {
        let side = |id: &str| SideDescriptor {
            source_id: id.to_string(),
            manifest_url: format!("/frames/{id}/manifest.json"),
        };
        PairDescriptor { pair_id: pair.pair_id.clone(), left: side(&pair.left), right: side(&pair.right) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionDescriptor {
    pub session_id: String,
    pub set_id: String,
    pub created_at: u64,
    pub status: SessionStatus,
    pub pairs: Vec<PairDescriptor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairInfo {
    #[serde(flatten)]
    pub pair: PairDescriptor,
    /// Manifests inlined from the frames directory when available.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub left_manifest: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub right_manifest: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Deserialize)]
struct VoteBody {
    pair_id: String,
    choice: String,
    ttc_ms: f64,
    #[serde(default)]
    replay_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteResponse {
    pub session_id: String,
    pub pair_id: String,
    pub position: usize,
    pub remaining: usize,
    pub ttc_outlier: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalizeResponse {
    pub session_id: String,
    pub status: SessionStatus,
}

pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

impl From<StudyError> for ApiError {
    fn from(e: StudyError) -> Self {
        let code = match &e {
            StudyError::NoPairSets => StatusCode::SERVICE_UNAVAILABLE,
            StudyError::UnknownSession(_) | StudyError::UnknownPair { .. } => StatusCode::NOT_FOUND,
            StudyError::Duplicate(_) | StudyError::OutOfOrder { .. } | StudyError::Closed { .. } => {
                StatusCode::CONFLICT
            }
            StudyError::InvalidTtc(_) => StatusCode::BAD_REQUEST,
            StudyError::Catalog(_) | StudyError::Store(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if code == StatusCode::INTERNAL_SERVER_ERROR {
            tracing::error!("{e}");
        }
        ApiError(code, e.to_string())
    }
}

type Shared = Arc<AppState>;

fn lock(state: &AppState) -> std::sync::MutexGuard<'_, Study> {
    state.study.lock().unwrap_or_else(|p| p.into_inner())
}

async fn create_session(State(state): State<Shared>) -> Result<(StatusCode, Json<SessionDescriptor>), ApiError> {
    let now = (state.clock)();
    let mut study = lock(&state);
    let s = study.create_session(now)?;
    let pairs = s
        .presentation_order
        .iter()
        .map(|id| PairDescriptor::of(study.pair(id).expect("ordered pairs exist")))
        .collect();
    tracing::info!(session = %s.session_id, set = %s.set_id, "session created");
    Ok((
        StatusCode::CREATED,
        Json(SessionDescriptor {
            session_id: s.session_id,
            set_id: s.set_id,
            created_at: s.created_at,
            status: s.status,
            pairs,
        }),
    ))
}

async fn record_vote(
    State(state): State<Shared>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<VoteResponse>, ApiError> {
    let body: VoteBody = serde_json::from_slice(&body).map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.to_string()))?;
    let choice: Choice = body
        .choice
        .parse()
        .map_err(|e: atfqoe_core::choice::ParseChoiceError| ApiError(StatusCode::BAD_REQUEST, e.to_string()))?;
    let now = (state.clock)();
    let ack = lock(&state).record_vote(&id, &body.pair_id, choice, body.ttc_ms, body.replay_count, now)?;
    Ok(Json(VoteResponse {
        session_id: id,
        pair_id: body.pair_id,
        position: ack.position,
        remaining: ack.remaining,
        ttc_outlier: ack.ttc_outlier,
    }))
}

async fn finalize(State(state): State<Shared>, Path(id): Path<String>) -> Result<Json<FinalizeResponse>, ApiError> {
    let now = (state.clock)();
    let status = lock(&state).finalize_session(&id, now)?;
    tracing::info!(session = %id, ?status, "session finalized");
    Ok(Json(FinalizeResponse { session_id: id, status }))
}

fn read_manifest(state: &AppState, source_id: &str) -> Option<serde_json::Value> {
    let path = state.frames_dir.as_ref()?.join(source_id).join("manifest.json");
    serde_json::from_slice(&std::fs::read(path).ok()?).ok()
}

async fn get_pair(State(state): State<Shared>, Path(id): Path<String>) -> Result<Json<PairInfo>, ApiError> {
    let pair = {
        let study = lock(&state);
        let p = study.pair(&id).ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown pair {id}")))?;
        PairDescriptor::of(p)
    };
    Ok(Json(PairInfo {
        left_manifest: read_manifest(&state, &pair.left.source_id),
        right_manifest: read_manifest(&state, &pair.right.source_id),
        pair,
    }))
}

async fn export_votes(State(state): State<Shared>) -> Result<Response, ApiError> {
    let now = (state.clock)();
    let export = {
        let mut study = lock(&state);
        study.expire_idle(now)?;
        study.export()
    };
    let mut body = Vec::new();
    export.write_to(&mut body).map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

pub fn router(state: Arc<AppState>) -> Router {
    let mut app = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/votes", post(record_vote))
        .route("/sessions/{id}/finalize", post(finalize))
        .route("/pairs/{id}", get(get_pair))
        .route("/export/votes", get(export_votes));
    if let Some(dir) = &state.frames_dir {
        app = app.nest_service("/frames", ServeDir::new(dir));
    }
    app.with_state(state)
}
