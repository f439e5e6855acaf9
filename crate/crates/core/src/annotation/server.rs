use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

use super::{AnnotationError, AnnotationStore, Demographics, SubmitRequest};

impl IntoResponse for AnnotationError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!("{self}");
        }
        (status, Json(json!({"error": self.to_string()}))).into_response()
    }
}

#[derive(Debug, Default, Deserialize)]
struct CreateSession {
    #[serde(default)]
    annotator_id: Option<String>,
    #[serde(default)]
    demographics: Option<Demographics>,
}

type Shared = State<Arc<AnnotationStore>>;

async fn create_session(State(store): Shared, body: Option<Json<CreateSession>>) -> Response {
    let body = body.map(|Json(b)| b).unwrap_or_default();
    match store.open_session(body.annotator_id.as_deref(), body.demographics) {
        Ok(h) => {
            let status = if h.created { StatusCode::CREATED } else { StatusCode::OK };
            (status, Json(h)).into_response()
        }
        Err(e) => e.into_response(),
    }
}

async fn next(State(store): Shared, Path(id): Path<String>) -> Response {
    match store.next_task(&id) {
        Ok(t) => Json(t).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn respond(State(store): Shared, Path(id): Path<String>, Json(req): Json<SubmitRequest>) -> Response {
    match store.submit(&id, &req) {
        Ok(ack) => Json(ack).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn export(State(store): Shared) -> Response {
    match store.export_csv() {
        Ok(csv) => ([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn progress(State(store): Shared) -> Response {
    Json(store.progress()).into_response()
}

async fn placeholder() -> Html<&'static str> {
    Html("<!doctype html><title>annotation</title><p>No UI bundle configured; the API is under /api/.</p>")
}

/// API routes plus the UI bundle in `ui_dir`, when given.
pub fn annotation_router(store: Arc<AnnotationStore>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}/next", get(next))
        .route("/api/sessions/{id}/responses", post(respond))
        .route("/api/export", get(export))
        .route("/api/progress", get(progress))
        .with_state(store);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(placeholder)),
    }
}

pub async fn serve_annotation(
    store: Arc<AnnotationStore>,
    ui_dir: Option<PathBuf>,
    addr: SocketAddr,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("annotation service on http://{}", listener.local_addr()?);
    axum::serve(listener, annotation_router(store, ui_dir)).await
}
