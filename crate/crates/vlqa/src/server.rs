//! HTTP routes over an atomically swappable library snapshot.

use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};
use tracing::{info, warn};
use vlqa_core::index::Bm25Params;
use vlqa_core::ingest::load_library;
use vlqa_core::llm::ChatGateway;
use vlqa_core::pipeline::{FailureKind, PipelineError};
use vlqa_core::{Corpus, LibraryStore, Pipeline, SearchQuery};

use crate::api::{AskRequest, AskResponse, ErrorBody, HealthResponse, MomentDetail, MomentSummary, SearchRequest};
use crate::config::ServiceConfig;

pub const DEFAULT_SEARCH_TOP_K: usize = 10;

/// One built corpus plus the number of snapshots installed before it.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub corpus: Arc<Corpus>,
    pub generation: u64,
}

#[derive(Debug, Clone)]
pub struct LibrarySource {
    pub videos: PathBuf,
    pub moments: PathBuf,
    pub strict: bool,
}

pub struct AppState {
    snapshot: RwLock<Option<Snapshot>>,
    pipeline: Pipeline,
    gateway: Arc<dyn ChatGateway>,
    bm25: Bm25Params,
    source: Option<LibrarySource>,
}

impl AppState {
    pub fn new(pipeline: Pipeline, gateway: Arc<dyn ChatGateway>, source: Option<LibrarySource>) -> Self {
        Self {
            snapshot: RwLock::new(None),
            bm25: pipeline.retriever.bm25,
            pipeline,
            gateway,
            source,
        }
    }

    pub fn from_config(cfg: &ServiceConfig) -> anyhow::Result<Self> {
        let source = match (&cfg.videos, &cfg.moments) {
            (Some(v), Some(m)) => Some(LibrarySource {
                videos: v.clone(),
                moments: m.clone(),
                strict: cfg.strict,
            }),
            (None, None) => None,
            _ => anyhow::bail!("`videos` and `moments` must be configured together"),
        };
        Ok(Self::new(cfg.pipeline()?, cfg.gateway()?, source))
    }

    pub fn snapshot(&self) -> Option<Snapshot> {
        self.snapshot.read().expect("snapshot lock poisoned").clone()
    }

    /// Builds an index for `library` and swaps it in. In-flight requests keep
    /// the snapshot they started with.
    pub fn install(&self, library: LibraryStore) -> Result<Snapshot, vlqa_core::ingest::IngestError> {
        let corpus = Arc::new(Corpus::build(library)?);
        let mut slot = self.snapshot.write().expect("snapshot lock poisoned");
        let generation = slot.as_ref().map_or(1, |s| s.generation + 1);
        let snap = Snapshot { corpus, generation };
        *slot = Some(snap.clone());
        Ok(snap)
    }

    /// Loads the configured library files and installs them.
    pub async fn reload(&self) -> Result<Snapshot, ApiError> {
        let Some(src) = self.source.clone() else {
            return Err(ApiError::new(StatusCode::CONFLICT, "no library paths configured"));
        };
        let outcome = tokio::task::spawn_blocking(move || load_library(&src.videos, &src.moments, src.strict))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))?
            .map_err(|e| ApiError::internal(e.to_string()))?;
        for d in &outcome.diagnostics {
            warn!(file = %d.file, line = d.line, reason = %d.reason, "skipped library line");
        }
        let snap = self.install(outcome.store).map_err(|e| ApiError::internal(e.to_string()))?;
        info!(docs = snap.corpus.index().doc_count(), generation = snap.generation, "library installed");
        Ok(snap)
    }
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, reason: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                stage: None,
                reason: reason.into(),
            },
        }
    }

    fn bad_request(reason: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, reason)
    }

    fn internal(reason: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, reason)
    }

    fn not_ready() -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, "index not ready")
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let status = match e.kind {
            FailureKind::InvalidInput => StatusCode::BAD_REQUEST,
            FailureKind::Upstream => StatusCode::BAD_GATEWAY,
            FailureKind::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self {
            status,
            body: ErrorBody {
                stage: Some(e.stage.as_str().to_string()),
                reason: e.message,
            },
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::bad_request(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

fn current(state: &AppState) -> Result<Snapshot, ApiError> {
    state.snapshot().ok_or_else(ApiError::not_ready)
}

async fn ask(
    State(state): State<Arc<AppState>>,
    body: Result<Json<AskRequest>, JsonRejection>,
) -> Result<Json<AskResponse>, ApiError> {
    let Json(req) = body?;
    if req.query.trim().is_empty() {
        return Err(ApiError::bad_request("query must not be empty"));
    }
    if req.max_docs == Some(0) {
        return Err(ApiError::bad_request("max_docs must be >= 1"));
    }
    let snap = current(&state)?;
    let outcome = state
        .pipeline
        .ask(&req.query, &snap.corpus, state.gateway.as_ref(), req.max_docs)
        .await?;
    Ok(Json(AskResponse::new(outcome, &snap.corpus)))
}

async fn search(
    State(state): State<Arc<AppState>>,
    body: Result<Json<SearchRequest>, JsonRejection>,
) -> Result<Json<Vec<MomentSummary>>, ApiError> {
    let Json(req) = body?;
    let query = SearchQuery::new(&req.query).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let snap = current(&state)?;
    let index = snap.corpus.index();
    let hits = index.search(&query, req.top_k.unwrap_or(DEFAULT_SEARCH_TOP_K), &state.bm25);
    Ok(Json(
        hits.iter()
            .filter_map(|h| index.document(&h.doc_id).map(|d| MomentSummary::new(d, h.score)))
            .collect(),
    ))
}

async fn moment(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<MomentDetail>, ApiError> {
    let snap = current(&state)?;
    let lib = snap.corpus.library();
    let not_found = || ApiError::new(StatusCode::NOT_FOUND, format!("unknown moment `{id}`"));
    let moment = lib.moment(&id).ok_or_else(not_found)?;
    let video = lib.asset(&moment.video_id).ok_or_else(not_found)?;
    let document = snap.corpus.index().document(&id).ok_or_else(not_found)?;
    Ok(Json(MomentDetail {
        document: document.clone(),
        moment: moment.clone(),
        video: video.clone(),
    }))
}

async fn health(State(state): State<Arc<AppState>>) -> Result<Json<HealthResponse>, ApiError> {
    let snap = current(&state)?;
    Ok(Json(HealthResponse {
        status: "ok".into(),
        docs: snap.corpus.index().doc_count(),
        generation: snap.generation,
    }))
}

async fn reload(State(state): State<Arc<AppState>>) -> Result<Json<HealthResponse>, ApiError> {
    let snap = state.reload().await?;
    Ok(Json(HealthResponse {
        status: "ok".into(),
        docs: snap.corpus.index().doc_count(),
        generation: snap.generation,
    }))
}

fn cors(origins: &[String]) -> Option<CorsLayer> {
    if origins.is_empty() {
        return None;
    }
    let allow = if origins.iter().any(|o| o == "*") {
        AllowOrigin::from(Any)
    } else {
        AllowOrigin::list(origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()))
    };
    Some(
        CorsLayer::new()
            .allow_origin(allow)
            .allow_methods([Method::GET, Method::POST])
            .allow_headers([header::CONTENT_TYPE]),
    )
}

pub fn router(state: Arc<AppState>, cors_allowed_origins: &[String]) -> Router {
    let app = Router::new()
        .route("/ask", post(ask))
        .route("/search", post(search))
        .route("/moments/{id}", get(moment))
        .route("/health", get(health))
        .route("/reload", post(reload))
        .with_state(state);
    match cors(cors_allowed_origins) {
        Some(layer) => app.layer(layer),
        None => app,
    }
}
