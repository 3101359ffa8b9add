//! Local HTTP/JSON service over a directory of tracking projects.
//!
//! Every project lives in `<root>/<id>/`. Requests for one project are
//! serialized through a per-project lock; tracking runs as a background job
//! whose progress is reported by the status route. The JSON schema is
//! described in `docs/api.md`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use marktrack_core::chunking::plan_chunks;
use marktrack_core::config::Config;
use marktrack_core::correction::Review;
use marktrack_core::marking::MarkDocument;
use marktrack_core::media::Video;
use marktrack_core::pipeline::{track_video, BatchOp, OpResult, Project, ProjectMeta, Stage};
use marktrack_core::Error;
use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex as AsyncMutex, OwnedMutexGuard};
use tracing::{info, warn};

/// Error response: `{"error": code, "message": text}` plus the current
/// batch token on a stale-token conflict.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    token: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            token: None,
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::UnknownTracklet(_) | Error::UnknownReview(_) => StatusCode::NOT_FOUND,
            Error::StaleToken { .. } | Error::OutOfOrder { .. } | Error::Stage(_) => StatusCode::CONFLICT,
            Error::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
            Error::FrameOutOfRange { .. } => StatusCode::NOT_FOUND,
            Error::InsufficientExamples { .. } | Error::DegenerateData(_) | Error::TooFewStates(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            _ => StatusCode::BAD_REQUEST,
        };
        let token = match &e {
            Error::StaleToken { current, .. } => Some(current.clone()),
            _ => None,
        };
        ApiError {
            status,
            code: e.code(),
            message: e.to_string(),
            token,
        }
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    message: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    token: Option<&'a str>,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code,
            message: &self.message,
            token: self.token.as_deref(),
        };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    #[default]
    Idle,
    Running,
    Done,
    Failed,
}

/// Background tracking job of one project.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub state: JobState,
    /// Inclusive frame range per planned chunk.
    pub chunks: Vec<(usize, usize)>,
    /// Last stage reached per chunk.
    pub progress: Vec<Stage>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectStatus {
    pub id: String,
    pub stage: Stage,
    pub revision: u64,
    pub token: String,
    pub last_seq: u64,
    pub can_undo: bool,
    pub job: Job,
}

struct Slot {
    project: Arc<AsyncMutex<Project>>,
    job: Mutex<Job>,
    /// Copy of the project metadata as of the last write, readable while
    /// the project lock is held elsewhere.
    meta: Mutex<(ProjectMeta, bool)>,
}

impl Slot {
    fn new(project: Project) -> Arc<Slot> {
        let meta = (project.meta.clone(), project.can_undo());
        Arc::new(Slot {
            project: Arc::new(AsyncMutex::new(project)),
            job: Mutex::new(Job::default()),
            meta: Mutex::new(meta),
        })
    }

    fn refresh(&self, project: &Project) {
        *self.meta.lock().expect("meta lock") = (project.meta.clone(), project.can_undo());
    }

    fn status(&self) -> ProjectStatus {
        let (meta, can_undo) = self.meta.lock().expect("meta lock").clone();
        ProjectStatus {
            token: format!("r{}", meta.revision),
            id: meta.id,
            stage: meta.stage,
            revision: meta.revision,
            last_seq: meta.last_seq,
            can_undo,
            job: self.job.lock().expect("job lock").clone(),
        }
    }
}

/// Shared state of the router.
pub struct AppState {
    root: PathBuf,
    slots: Mutex<HashMap<String, Arc<Slot>>>,
}

impl AppState {
    pub fn new(root: impl Into<PathBuf>) -> Arc<AppState> {
        Arc::new(AppState {
            root: root.into(),
            slots: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn slot(&self, id: &str) -> ApiResult<Arc<Slot>> {
        check_id(id)?;
        let mut slots = self.slots.lock().expect("slot map lock");
        if let Some(s) = slots.get(id) {
            return Ok(s.clone());
        }
        let dir = self.root.join(id);
        if !dir.join("project.json").is_file() {
            return Err(ApiError::not_found(format!("unknown project {id}")));
        }
        let slot = Slot::new(Project::open(&dir)?);
        slots.insert(id.to_string(), slot.clone());
        Ok(slot)
    }
}

fn check_id(id: &str) -> ApiResult<()> {
    let ok = !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if ok {
        Ok(())
    } else {
        Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "invalid_id",
            format!("project ids use 1-64 of [A-Za-z0-9_-], got {id:?}"),
        ))
    }
}

/// Runs `f` on the locked project in the blocking pool and refreshes the
/// metadata copy afterwards.
async fn with_project<T, F>(slot: Arc<Slot>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&mut Project) -> marktrack_core::Result<T> + Send + 'static,
{
    let guard: OwnedMutexGuard<Project> = slot.project.clone().lock_owned().await;
    tokio::task::spawn_blocking(move || {
        let mut guard = guard;
        let out = f(&mut guard);
        slot.refresh(&guard);
        out
    })
    .await
    .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
    .map_err(ApiError::from)
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/projects", post(create_project))
        .route("/projects/{id}", get(status))
        .route("/projects/{id}/marks", put(put_marks).get(get_marks))
        .route("/projects/{id}/schedule", get(schedule))
        .route("/projects/{id}/track", post(start_tracking))
        .route("/projects/{id}/reviews", get(reviews))
        .route("/projects/{id}/apply", post(apply))
        .route("/projects/{id}/undo", post(undo))
        .route("/projects/{id}/tracks", get(tracks))
        .route("/projects/{id}/frames/{frame}", get(frame))
        .with_state(state)
}

#[derive(Debug, Deserialize)]
pub struct CreateProject {
    pub id: String,
    pub manifest: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub config: Option<Config>,
}

async fn create_project(State(app): State<Arc<AppState>>, Json(req): Json<CreateProject>) -> ApiResult<(StatusCode, Json<ProjectStatus>)> {
    check_id(&req.id)?;
    let dir = app.root.join(&req.id);
    if app.slots.lock().expect("slot map lock").contains_key(&req.id) || dir.join("project.json").exists() {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "exists",
            format!("project {} already exists", req.id),
        ));
    }
    let config = req.config.unwrap_or_default();
    let project = tokio::task::spawn_blocking(move || Project::create(&dir, &req.manifest, config, req.seed))
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))??;
    info!(id = %project.meta.id, "project created");
    let id = project.meta.id.clone();
    let slot = Slot::new(project);
    let status = slot.status();
    app.slots.lock().expect("slot map lock").insert(id, slot);
    Ok((StatusCode::CREATED, Json(status)))
}

async fn status(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<ProjectStatus>> {
    Ok(Json(app.slot(&id)?.status()))
}

fn ensure_idle(slot: &Slot) -> ApiResult<()> {
    if slot.job.lock().expect("job lock").state == JobState::Running {
        return Err(ApiError::new(StatusCode::CONFLICT, "busy", "a tracking job is running"));
    }
    Ok(())
}

async fn put_marks(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(marks): Json<MarkDocument>,
) -> ApiResult<Json<ProjectStatus>> {
    let slot = app.slot(&id)?;
    ensure_idle(&slot)?;
    with_project(slot.clone(), move |p| p.set_marks(marks)).await?;
    Ok(Json(slot.status()))
}

async fn get_marks(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<MarkDocument>> {
    let slot = app.slot(&id)?;
    let p = slot.project.lock().await;
    Ok(Json(p.marks.clone().unwrap_or_else(|| MarkDocument::new(vec![]))))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Schedule {
    pub frames: Vec<usize>,
}

async fn schedule(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Schedule>> {
    let slot = app.slot(&id)?;
    let frames = with_project(slot, |p| p.mark_schedule()).await?;
    Ok(Json(Schedule { frames }))
}

async fn start_tracking(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<(StatusCode, Json<ProjectStatus>)> {
    let slot = app.slot(&id)?;
    let (video, marks, config, seed) = {
        let p = slot.project.lock().await;
        p.check_trackable()?;
        let mut job = slot.job.lock().expect("job lock");
        if job.state == JobState::Running {
            return Err(ApiError::new(StatusCode::CONFLICT, "busy", "a tracking job is running"));
        }
        let video = p.video()?;
        let plan = plan_chunks(video.frame_count(), &p.config.chunking)?;
        *job = Job {
            state: JobState::Running,
            progress: vec![Stage::Marked; plan.ranges.len()],
            chunks: plan.ranges,
            error: None,
        };
        (video, p.marks.clone().expect("marked project has marks"), p.config.clone(), p.meta.seed)
    };
    let worker = slot.clone();
    tokio::task::spawn_blocking(move || {
        let progress = |pr: marktrack_core::pipeline::Progress| {
            let mut job = worker.job.lock().expect("job lock");
            if let Some(s) = job.progress.get_mut(pr.chunk) {
                *s = pr.stage;
            }
        };
        let result = track_video(&video, &marks, &config, seed, &progress).and_then(|run| {
            let mut p = worker.project.blocking_lock();
            let stored = p.store_run(run);
            worker.refresh(&p);
            stored
        });
        let mut job = worker.job.lock().expect("job lock");
        match result {
            Ok(_) => job.state = JobState::Done,
            Err(e) => {
                warn!(error = %e, "tracking failed");
                job.state = JobState::Failed;
                job.error = Some(e.to_string());
            }
        }
    });
    Ok((StatusCode::ACCEPTED, Json(slot.status())))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReviewBatch {
    pub token: String,
    pub reviews: Vec<Review>,
}

async fn reviews(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<ReviewBatch>> {
    let slot = app.slot(&id)?;
    let p = slot.project.lock().await;
    Ok(Json(ReviewBatch {
        token: p.batch_token(),
        reviews: p.reviews()?,
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ApplyBatch {
    pub token: String,
    pub seq: u64,
    pub ops: Vec<BatchOp>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ApplyResult {
    pub token: String,
    pub results: Vec<OpResult>,
}

async fn apply(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(batch): Json<ApplyBatch>,
) -> ApiResult<Json<ApplyResult>> {
    let slot = app.slot(&id)?;
    ensure_idle(&slot)?;
    let out = with_project(slot, move |p| {
        let results = p.apply(&batch.token, batch.seq, &batch.ops)?;
        Ok(ApplyResult {
            token: p.batch_token(),
            results,
        })
    })
    .await?;
    Ok(Json(out))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct UndoResult {
    pub token: String,
    pub can_undo: bool,
}

async fn undo(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<UndoResult>> {
    let slot = app.slot(&id)?;
    ensure_idle(&slot)?;
    let out = with_project(slot, |p| {
        p.undo()?;
        Ok(UndoResult {
            token: p.batch_token(),
            can_undo: p.can_undo(),
        })
    })
    .await?;
    Ok(Json(out))
}

#[derive(Debug, Default, Deserialize)]
pub struct TracksQuery {
    #[serde(default)]
    pub format: Option<String>,
}

async fn tracks(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, Query(q): Query<TracksQuery>) -> ApiResult<Response> {
    let slot = app.slot(&id)?;
    let p = slot.project.lock().await;
    let doc = p.documents()?;
    match q.format.as_deref().unwrap_or("json") {
        "json" => Ok(([(header::CONTENT_TYPE, "application/json")], doc.to_json()).into_response()),
        "csv" => {
            let mut buf = Vec::new();
            doc.write_csv(&mut buf)?;
            Ok(([(header::CONTENT_TYPE, "text/csv")], buf).into_response())
        }
        other => Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "invalid_format",
            format!("unknown format {other:?}; use json or csv"),
        )),
    }
}

async fn frame(State(app): State<Arc<AppState>>, UrlPath((id, t)): UrlPath<(String, usize)>) -> ApiResult<Response> {
    let slot = app.slot(&id)?;
    let manifest = slot.meta.lock().expect("meta lock").0.manifest.clone();
    let png = tokio::task::spawn_blocking(move || {
        let video = marktrack_core::media::open_sequence(&manifest)?;
        video.check_index(t)?;
        video.read_frame(t)?.encode_png()
    })
    .await
    .map_err(|e| ApiError::internal(format!("worker failed: {e}")))??;
    Ok(Response::builder()
        .header(header::CONTENT_TYPE, "image/png")
        .body(Body::from(png))
        .map_err(|e| ApiError::internal(e.to_string()))?)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(root: PathBuf, addr: std::net::SocketAddr) -> std::io::Result<()> {
    std::fs::create_dir_all(&root)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    info!(addr = %listener.local_addr()?, root = %root.display(), "serving");
    axum::serve(listener, router(AppState::new(root))).await
}
