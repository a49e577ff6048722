//! JSON API consumed by the chat UI.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{HeaderValue, StatusCode};
use axum::routing::{get, post};
use axum::{Json, Router};
use haptic_core::agent::AgentResponse;
use haptic_core::ingestion::{DocumentKind, SourceDocument};
use haptic_core::{DeviceId, DeviceRecord, SourceKind};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use tokio::sync::mpsc;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};
use tracing::{info, warn};

use crate::engine::Engine;
use crate::error::ApiError;

pub type JobId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    /// Drafted and waiting in the review queue.
    Staged,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub job_id: JobId,
    pub uri: String,
    pub state: JobState,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub device_id: Option<DeviceId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ApiError>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct IngestRequest {
    pub uri: String,
    pub kind: DocumentKind,
    pub source_kind: SourceKind,
    /// Document text; when absent the uri must be an http(s) URL.
    #[serde(default)]
    pub content: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ChatRequest {
    pub prompt: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobAccepted {
    pub job_id: JobId,
}

/// Background ingestion: jobs run one at a time, in submission order.
struct Jobs {
    next: AtomicU64,
    status: Mutex<BTreeMap<JobId, JobStatus>>,
    tx: mpsc::UnboundedSender<(JobId, IngestRequest)>,
}

impl Jobs {
    fn set(&self, id: JobId, f: impl FnOnce(&mut JobStatus)) {
        if let Some(s) = self.status.lock().get_mut(&id) {
            f(s);
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    engine: Arc<Engine>,
    jobs: Arc<Jobs>,
}

impl AppState {
    /// Wraps the engine and starts the ingestion worker on the current
    /// runtime.
    pub fn new(engine: Arc<Engine>) -> Self {
        let (tx, rx) = mpsc::unbounded_channel();
        let jobs = Arc::new(Jobs {
            next: AtomicU64::new(1),
            status: Mutex::new(BTreeMap::new()),
            tx,
        });
        tokio::spawn(ingest_worker(engine.clone(), jobs.clone(), rx));
        Self { engine, jobs }
    }

    pub fn engine(&self) -> &Arc<Engine> {
        &self.engine
    }
}

async fn ingest_worker(
    engine: Arc<Engine>,
    jobs: Arc<Jobs>,
    mut rx: mpsc::UnboundedReceiver<(JobId, IngestRequest)>,
) {
    while let Some((id, req)) = rx.recv().await {
        jobs.set(id, |s| s.state = JobState::Running);
        let engine = engine.clone();
        let outcome = tokio::task::spawn_blocking(move || {
            let doc = match req.content {
                Some(content) => SourceDocument::new(req.uri, req.kind, content),
                None => engine.load_document(&req.uri, req.kind, false)?,
            };
            engine.ingest_one(doc, req.source_kind)
        })
        .await
        .unwrap_or_else(|e| Err(ApiError::internal(format!("ingestion worker: {e}"))));
        match outcome {
            Ok(device) => {
                info!(job = id, device, "ingestion job staged");
                jobs.set(id, |s| {
                    s.state = JobState::Staged;
                    s.device_id = Some(device);
                });
            }
            Err(e) => {
                warn!(job = id, error = %e, "ingestion job failed");
                jobs.set(id, |s| {
                    s.state = JobState::Failed;
                    s.error = Some(e);
                });
            }
        }
    }
}

pub fn router(state: AppState, cors_origin: Option<&str>) -> Result<Router, ApiError> {
    let origin = match cors_origin {
        Some(o) => AllowOrigin::exact(
            HeaderValue::from_str(o).map_err(|e| ApiError::bad_request(format!("cors origin `{o}`: {e}")))?,
        ),
        None => AllowOrigin::from(Any),
    };
    let cors = CorsLayer::new().allow_origin(origin).allow_methods(Any).allow_headers(Any);
    Ok(Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/:id/chat", post(chat))
        .route("/api/devices", get(list_devices))
        .route("/api/devices/:id", get(get_device))
        .route("/api/samples", get(samples))
        .route("/api/ingest", post(submit_ingest))
        .route("/api/ingest/:job", get(ingest_status))
        .fallback(not_found)
        .layer(cors)
        .with_state(state))
}

/// Runs blocking engine work off the async executor.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .unwrap_or_else(|e| Err(ApiError::internal(format!("worker: {e}"))))
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::bad_request(e.body_text()))
}

async fn create_session(State(s): State<AppState>) -> Result<(StatusCode, Json<SessionCreated>), ApiError> {
    let engine = s.engine.clone();
    let session_id = blocking(move || engine.create_session()).await?;
    Ok((StatusCode::CREATED, Json(SessionCreated { session_id })))
}

async fn chat(
    State(s): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<ChatRequest>, JsonRejection>,
) -> Result<Json<AgentResponse>, ApiError> {
    let req = body(payload)?;
    let engine = s.engine.clone();
    let trace = blocking(move || engine.chat(&id, &req.prompt)).await?;
    Ok(Json(trace.response))
}

async fn get_device(State(s): State<AppState>, Path(id): Path<String>) -> Result<Json<DeviceRecord>, ApiError> {
    let id: DeviceId = id
        .parse()
        .map_err(|_| ApiError::bad_request(format!("`{id}` is not a device id")))?;
    Ok(Json(s.engine.device(id)?))
}

async fn list_devices(
    State(s): State<AppState>,
    params: Result<Query<Vec<(String, String)>>, QueryRejection>,
) -> Result<Json<Vec<DeviceRecord>>, ApiError> {
    let Query(params) = params.map_err(|e| ApiError::bad_request(e.body_text()))?;
    Ok(Json(s.engine.filter_devices(&params)?))
}

async fn samples(State(s): State<AppState>) -> Json<Vec<String>> {
    Json(s.engine.samples().to_vec())
}

async fn submit_ingest(
    State(s): State<AppState>,
    payload: Result<Json<IngestRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<JobAccepted>), ApiError> {
    let req = body(payload)?;
    if req.uri.trim().is_empty() {
        return Err(ApiError::bad_request("uri is empty"));
    }
    if req.content.is_none() && !(req.uri.starts_with("http://") || req.uri.starts_with("https://")) {
        return Err(ApiError::bad_request(format!(
            "`{}` is not an http(s) URL; send the document content instead",
            req.uri
        )));
    }
    let job_id = s.jobs.next.fetch_add(1, Ordering::Relaxed);
    s.jobs.status.lock().insert(
        job_id,
        JobStatus {
            job_id,
            uri: req.uri.clone(),
            state: JobState::Queued,
            device_id: None,
            error: None,
        },
    );
    s.jobs
        .tx
        .send((job_id, req))
        .map_err(|_| ApiError::internal("ingestion worker has stopped"))?;
    Ok((StatusCode::ACCEPTED, Json(JobAccepted { job_id })))
}

async fn ingest_status(State(s): State<AppState>, Path(job): Path<String>) -> Result<Json<JobStatus>, ApiError> {
    let status = job
        .parse::<JobId>()
        .ok()
        .and_then(|id| s.jobs.status.lock().get(&id).cloned())
        .ok_or_else(|| ApiError::not_found(format!("ingestion job `{job}` not found")))?;
    Ok(Json(status))
}

async fn not_found() -> ApiError {
    ApiError::not_found("no such endpoint")
}
