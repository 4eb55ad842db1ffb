//! HTTP+JSON routes over [`Service`].

use std::sync::Arc;

use axum::body::Body;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use attrlabel_core::allocation::AllocationError;

use crate::{Flag, GroupEdit, Service, ServiceError, Submission};

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::UnknownDataset(_) | ServiceError::UnknownImage(_) | ServiceError::UnknownAgent { .. } => {
                StatusCode::NOT_FOUND
            }
            ServiceError::Allocation(AllocationError::UnknownAnnotator(_)) => StatusCode::NOT_FOUND,
            ServiceError::StaleSession => StatusCode::UNAUTHORIZED,
            ServiceError::NotAssigned(_) | ServiceError::Allocation(AllocationError::NotAssigned { .. }) => {
                StatusCode::CONFLICT
            }
            ServiceError::Validation(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.kind(), "message": self.to_string() });
        if let ServiceError::Validation(v) = &self {
            body["violations"] = json!(v);
        }
        (self.status(), Json(body)).into_response()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StartSession {
    pub annotator: String,
    pub dataset: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionQuery {
    pub session: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetQuery {
    pub dataset: String,
}

/// A request body carrying the session token next to the payload fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WithSession<T> {
    pub session: String,
    #[serde(flatten)]
    pub body: T,
}

type Shared = Arc<Service>;

async fn blocking<T, F>(f: F) -> Result<Json<T>, ServiceError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .expect("service call panicked")
        .map(Json)
}

async fn datasets(State(svc): State<Shared>) -> Json<Vec<String>> {
    Json(svc.dataset_ids())
}

async fn start_session(State(svc): State<Shared>, Json(req): Json<StartSession>) -> impl IntoResponse {
    blocking(move || svc.start_session(&req.annotator, &req.dataset)).await
}

async fn task(State(svc): State<Shared>, Query(q): Query<SessionQuery>) -> impl IntoResponse {
    blocking(move || svc.get_task(&q.session)).await
}

async fn progress(State(svc): State<Shared>, Query(q): Query<SessionQuery>) -> impl IntoResponse {
    blocking(move || svc.progress(&q.session)).await
}

async fn annotate(State(svc): State<Shared>, Json(req): Json<WithSession<Submission>>) -> impl IntoResponse {
    blocking(move || svc.submit_annotation(&req.session, req.body)).await
}

async fn groups(State(svc): State<Shared>, Json(req): Json<WithSession<GroupEdit>>) -> impl IntoResponse {
    blocking(move || svc.edit_groups(&req.session, req.body)).await
}

async fn flag(State(svc): State<Shared>, Json(req): Json<WithSession<Flag>>) -> impl IntoResponse {
    blocking(move || svc.flag_image(&req.session, req.body)).await
}

async fn export(State(svc): State<Shared>, Path(dataset): Path<String>) -> impl IntoResponse {
    blocking(move || svc.export(&dataset)).await
}

async fn image(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<DatasetQuery>,
) -> Result<Response, ServiceError> {
    let path = svc.image_path(&q.dataset, &id)?;
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|_| ServiceError::UnknownImage(id.clone()))?;
    let mime = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        _ => "application/octet-stream",
    };
    Ok(([(header::CONTENT_TYPE, mime)], Body::from(bytes)).into_response())
}

pub fn router(service: Shared) -> Router {
    Router::new()
        .route("/datasets", get(datasets))
        .route("/sessions", post(start_session))
        .route("/task", get(task))
        .route("/progress", get(progress))
        .route("/annotations", post(annotate))
        .route("/groups", post(groups))
        .route("/flags", post(flag))
        .route("/images/{id}", get(image))
        .route("/export/{dataset}", get(export))
        .with_state(service)
}

/// Serves until the process is stopped.
pub async fn serve(service: Shared, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(service)).await
}
