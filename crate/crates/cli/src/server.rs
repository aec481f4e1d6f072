//! HTTP JSON API over a directory of tracked project files.
//!
//! The experience base is loaded once and only read. Each project lives in
//! `<projects>/<id>.tp`; mutations take a per-project lock, apply the
//! controller operation, and persist the file atomically before the
//! response is sent. Reads never lock because files are replaced by rename.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::{Path as FsPath, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use log::{info, warn};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sprintctl_core::{
    ContextVector, ControlConfig, ControlEvent, Controller, Error, ExperienceBase, ReplanCause, TrackedProject,
};

use crate::commands::resolve_attribute;
use crate::error::{CliError, CliResult};
use crate::json::to_fixed_string;

pub const PROJECT_EXTENSION: &str = "tp";

pub struct AppState {
    base: ExperienceBase,
    base_path: String,
    projects_dir: PathBuf,
    control: ControlConfig,
    locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

impl AppState {
    pub fn new(base: ExperienceBase, base_path: &FsPath, projects_dir: &FsPath, control: ControlConfig) -> CliResult<Self> {
        std::fs::create_dir_all(projects_dir).map_err(|e| Error::io(projects_dir, e))?;
        Ok(Self {
            base,
            base_path: base_path.display().to_string(),
            projects_dir: projects_dir.to_path_buf(),
            control,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn load(base_path: &FsPath, projects_dir: &FsPath, control: ControlConfig) -> CliResult<Self> {
        Self::new(ExperienceBase::load(base_path)?, base_path, projects_dir, control)
    }

    fn lock_for(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        let mut locks = self.locks.lock().unwrap_or_else(|p| p.into_inner());
        locks.entry(id.to_string()).or_default().clone()
    }

    fn project_path(&self, id: &str) -> CliResult<PathBuf> {
        validate_project_id(id)?;
        Ok(self.projects_dir.join(format!("{id}.{PROJECT_EXTENSION}")))
    }

    fn load_project(&self, id: &str) -> CliResult<TrackedProject> {
        let path = self.project_path(id)?;
        if !path.exists() {
            return Err(CliError::ProjectNotFound(id.to_string()));
        }
        Ok(TrackedProject::load(&path)?)
    }

    fn list_projects(&self) -> CliResult<Vec<TrackedProject>> {
        let entries = std::fs::read_dir(&self.projects_dir).map_err(|e| Error::io(&self.projects_dir, e))?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension().is_some_and(|x| x == PROJECT_EXTENSION)
                    && p.file_stem()
                        .and_then(|s| s.to_str())
                        .is_some_and(|s| validate_project_id(s).is_ok())
            })
            .collect();
        paths.sort();
        let mut projects = Vec::with_capacity(paths.len());
        for path in paths {
            match TrackedProject::load(&path) {
                Ok(p) => projects.push(p),
                Err(e) => warn!("skipping {}: {e}", path.display()),
            }
        }
        Ok(projects)
    }
}

/// Ids become file names, so only a conservative character set is accepted.
pub fn validate_project_id(id: &str) -> CliResult<()> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(CliError::InvalidProjectId(id.to_string()))
    }
}

struct ApiError(CliError);

impl From<CliError> for ApiError {
    fn from(e: CliError) -> Self {
        ApiError(e)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e.into())
    }
}

pub fn status_for(error: &CliError) -> StatusCode {
    match error {
        CliError::ProjectNotFound(_) => StatusCode::NOT_FOUND,
        CliError::ProjectExists(_) => StatusCode::CONFLICT,
        CliError::InvalidProjectId(_) | CliError::BadRequest(_) | CliError::Usage(_) => StatusCode::BAD_REQUEST,
        CliError::Config { .. } | CliError::Bind { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        CliError::Core(e) => match e {
            Error::UnknownAttribute { .. } | Error::UnknownCluster { .. } => StatusCode::NOT_FOUND,
            Error::BaseMismatch { .. } => StatusCode::CONFLICT,
            Error::Io { .. } | Error::CorruptFile(_) | Error::VersionMismatch { .. } => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        },
    }
}

fn fixed_json(status: StatusCode, value: &Value) -> Response {
    (
        status,
        [(header::CONTENT_TYPE, "application/json")],
        to_fixed_string(value),
    )
        .into_response()
}

fn error_body(code: &str, message: &str) -> Value {
    json!({ "error_code": code, "message": message })
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = status_for(&self.0);
        if status.is_server_error() {
            warn!("request failed: {}", self.0);
        }
        fixed_json(status, &error_body(self.0.code(), &self.0.to_string()))
    }
}

type ApiResult = Result<Response, ApiError>;

fn ok(value: Value) -> ApiResult {
    Ok(fixed_json(StatusCode::OK, &value))
}

fn to_value<T: Serialize>(value: &T) -> CliResult<Value> {
    serde_json::to_value(value).map_err(|e| Error::InvalidConfig(format!("cannot serialize response: {e}")).into())
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> CliResult<T> {
    serde_json::from_slice(body).map_err(|e| CliError::BadRequest(e.to_string()))
}

pub fn project_summary(project: &TrackedProject) -> CliResult<Value> {
    Ok(json!({
        "project_id": project.project_id,
        "attribute": project.attribute,
        "selected_cluster_id": project.selected_cluster_id,
        "planned_duration": project.planned_duration,
        "progress": project.progress(),
        "tolerance": project.config.tolerance,
        "n_actuals": project.actuals.len(),
        "n_events": project.events.len(),
        "overrun": project.overrun,
        "context": to_value(&project.context)?,
        "config": to_value(&project.config)?,
        "last_event": to_value(&project.events.last())?,
    }))
}

/// Plan, corridor and actual series exactly as a chart draws them.
pub fn project_curves(project: &TrackedProject) -> Value {
    let grid = project.prediction.grid();
    let tau = project.config.tolerance;
    let plan = &project.prediction.values;
    json!({
        "project_id": project.project_id,
        "attribute": project.attribute,
        "selected_cluster_id": project.selected_cluster_id,
        "tolerance": tau,
        "grid": grid.positions().collect::<Vec<f64>>(),
        "plan": plan,
        "corridor_low": plan.iter().map(|v| v * (1.0 - tau)).collect::<Vec<f64>>(),
        "corridor_high": plan.iter().map(|v| v * (1.0 + tau)).collect::<Vec<f64>>(),
        "actuals": project.actuals.iter().map(|&(t, value)| json!({"t": t, "value": value})).collect::<Vec<_>>(),
    })
}

pub fn clusters_view(base: &ExperienceBase, attribute: &str) -> CliResult<Value> {
    let model = base.attribute(attribute)?;
    let clusters: Vec<Value> = model
        .clusters
        .iter()
        .map(|c| {
            Ok(json!({
                "cluster_id": c.cluster_id,
                "member_ids": c.member_ids,
                "member_count": c.member_count,
                "curve": c.cluster_curve.values,
                "context": to_value(&c.context)?,
            }))
        })
        .collect::<CliResult<_>>()?;
    Ok(json!({
        "attribute": attribute,
        "threshold": model.threshold,
        "grid": base.grid.positions().collect::<Vec<f64>>(),
        "clusters": clusters,
    }))
}

fn mutation_response(project: &TrackedProject, events: &[ControlEvent]) -> CliResult<Value> {
    Ok(json!({
        "project": project_summary(project)?,
        "events": to_value(&events)?,
    }))
}

async fn get_schema(State(state): State<Arc<AppState>>) -> ApiResult {
    ok(to_value(&state.base.schema)?)
}

async fn get_clusters(State(state): State<Arc<AppState>>, Query(params): Query<BTreeMap<String, String>>) -> ApiResult {
    let attribute = resolve_attribute(&state.base, params.get("attribute").map(String::as_str))?;
    ok(clusters_view(&state.base, &attribute)?)
}

async fn list_projects(State(state): State<Arc<AppState>>) -> ApiResult {
    let summaries = state
        .list_projects()?
        .iter()
        .map(project_summary)
        .collect::<CliResult<Vec<_>>>()?;
    ok(Value::Array(summaries))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateProject {
    project_id: String,
    attribute: Option<String>,
    context: ContextVector,
    planned_duration: f64,
    config: Option<ControlConfig>,
}

async fn create_project(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    let request: CreateProject = parse_body(&body)?;
    let path = state.project_path(&request.project_id)?;
    let attribute = resolve_attribute(&state.base, request.attribute.as_deref())?;
    let lock = state.lock_for(&request.project_id);
    let _guard = lock.lock().await;
    if path.exists() {
        return Err(CliError::ProjectExists(request.project_id).into());
    }
    let controller = Controller::new(&state.base)?;
    let mut project = controller.plan_project(
        &request.project_id,
        &attribute,
        request.context,
        request.planned_duration,
        request.config.unwrap_or(state.control),
    )?;
    project.base_path = Some(state.base_path.clone());
    project.save(&path)?;
    info!("planned project {} with cluster {}", project.project_id, project.selected_cluster_id);
    let body = mutation_response(&project, &project.events)?;
    Ok(fixed_json(StatusCode::CREATED, &body))
}

async fn get_project(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult {
    ok(project_summary(&state.load_project(&id)?)?)
}

async fn get_curves(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult {
    ok(project_curves(&state.load_project(&id)?))
}

async fn get_events(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult {
    ok(to_value(&state.load_project(&id)?.events)?)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Measurement {
    t: f64,
    value: f64,
}

async fn post_measurement(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    validate_project_id(&id)?;
    let m: Measurement = parse_body(&body)?;
    let lock = state.lock_for(&id);
    let _guard = lock.lock().await;
    let mut project = state.load_project(&id)?;
    let events = project.record_actual(m.t, m.value)?;
    project.save(&state.project_path(&id)?)?;
    ok(mutation_response(&project, &events)?)
}

async fn post_replan(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    validate_project_id(&id)?;
    let cause: ReplanCause = parse_body(&body)?;
    let lock = state.lock_for(&id);
    let _guard = lock.lock().await;
    let mut project = state.load_project(&id)?;
    let old = project.selected_cluster_id;
    let events = Controller::new(&state.base)?.replan(&mut project, cause)?;
    project.save(&state.project_path(&id)?)?;
    info!("replanned project {id}: cluster {old} -> {}", project.selected_cluster_id);
    ok(mutation_response(&project, &events)?)
}

async fn not_found() -> Response {
    fixed_json(StatusCode::NOT_FOUND, &error_body("NOT_FOUND", "no such endpoint"))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/schema", get(get_schema))
        .route("/api/clusters", get(get_clusters))
        .route("/api/projects", get(list_projects).post(create_project))
        .route("/api/projects/{id}", get(get_project))
        .route("/api/projects/{id}/curves", get(get_curves))
        .route("/api/projects/{id}/events", get(get_events))
        .route("/api/projects/{id}/measurements", post(post_measurement))
        .route("/api/projects/{id}/replan", post(post_replan))
        .fallback(not_found)
        .with_state(state)
}

pub async fn bind(addr: &str) -> CliResult<tokio::net::TcpListener> {
    tokio::net::TcpListener::bind(addr).await.map_err(|source| CliError::Bind {
        addr: addr.to_string(),
        source,
    })
}

/// Binds `addr` and serves in a background task; returns the bound address.
pub async fn spawn(state: Arc<AppState>, addr: &str) -> CliResult<(SocketAddr, tokio::task::JoinHandle<()>)> {
    let listener = bind(addr).await?;
    let local = listener.local_addr().map_err(|source| CliError::Bind {
        addr: addr.to_string(),
        source,
    })?;
    let app = router(state);
    let handle = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            warn!("server stopped: {e}");
        }
    });
    Ok((local, handle))
}

/// Serves until interrupted.
pub async fn run(state: Arc<AppState>, addr: &str) -> CliResult<()> {
    let listener = bind(addr).await?;
    let local = listener.local_addr().map_err(|source| CliError::Bind {
        addr: addr.to_string(),
        source,
    })?;
    println!("listening on http://{local}");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::io("<http server>", e).into())
}
