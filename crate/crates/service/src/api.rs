//! REST endpoints over a [`StudyStore`].

use std::path::Path;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use musiq_core::study::{StudyDefinition, StudyError};
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

use crate::store::{StoreError, StudyStore, SubmitJudgment};

#[derive(Debug)]
pub struct ApiError(StoreError);

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind) = match &self.0 {
            StoreError::UnknownStudy(_) => (StatusCode::NOT_FOUND, "unknown_study"),
            StoreError::UnknownItem { .. } => (StatusCode::NOT_FOUND, "unknown_item"),
            StoreError::DuplicateJudgment { .. } => (StatusCode::CONFLICT, "duplicate_judgment"),
            StoreError::Study(StudyError::Domain { .. }) => (StatusCode::UNPROCESSABLE_ENTITY, "domain_error"),
            StoreError::Study(StudyError::DuplicateJudgment { .. }) => (StatusCode::CONFLICT, "duplicate_judgment"),
            StoreError::Study(StudyError::OrphanJudgment { .. }) => (StatusCode::INTERNAL_SERVER_ERROR, "orphan_judgment"),
            StoreError::Study(_) => (StatusCode::UNPROCESSABLE_ENTITY, "validation_error"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        if status.is_server_error() {
            tracing::error!(error = %self.0, "request failed");
        }
        (status, Json(json!({ "error": kind, "message": self.0.to_string() }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, StoreError> + Send + 'static,
) -> ApiResult<T> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError),
        Err(e) => Err(ApiError(StoreError::Io(std::io::Error::other(e.to_string())))),
    }
}

async fn upload(State(store): State<Arc<StudyStore>>, Json(def): Json<StudyDefinition>) -> ApiResult<Response> {
    let items = def.items.len();
    let id = blocking(move || store.upload_study(def)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "study_id": id, "items": items }))).into_response())
}

async fn list(State(store): State<Arc<StudyStore>>) -> Json<serde_json::Value> {
    Json(json!({ "studies": store.study_ids() }))
}

#[derive(Debug, Deserialize)]
struct RaterQuery {
    rater: String,
}

async fn next(
    State(store): State<Arc<StudyStore>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<RaterQuery>,
) -> ApiResult<Response> {
    let next = blocking(move || store.next_item(&id, &q.rater)).await?;
    Ok(Json(next).into_response())
}

async fn submit(State(store): State<Arc<StudyStore>>, Json(sub): Json<SubmitJudgment>) -> ApiResult<Response> {
    let now = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0);
    let judgment = blocking(move || store.submit(sub, now)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "ack": true, "judgment": judgment }))).into_response())
}

async fn results(State(store): State<Arc<StudyStore>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let report = blocking(move || store.results(&id)).await?;
    Ok(Json(report).into_response())
}

/// Routes: studies, next item, judgments, results, and `/media/*` files
/// from `media_root`.
pub fn router(store: Arc<StudyStore>, media_root: &Path) -> Router {
    Router::new()
        .route("/api/studies", post(upload).get(list))
        .route("/api/studies/{id}/items/next", get(next))
        .route("/api/judgments", post(submit))
        .route("/api/studies/{id}/results", get(results))
        .nest_service("/media", ServeDir::new(media_root))
        .with_state(store)
}
