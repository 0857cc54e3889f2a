//! HTTP/JSON front end over a loaded [`SearchEngine`].

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use sloth_core::engine::ConfigView;
use sloth_core::{QueryError, QueryRequest, SearchEngine};

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

/// An error response with a JSON `{"error": ...}` body.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn not_found(what: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("{what} not found"))
    }
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        let status = match e {
            QueryError::ZeroWeights => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::BAD_REQUEST,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(ErrorBody {
                error: self.message,
            }),
        )
            .into_response()
    }
}

pub fn router(engine: Arc<SearchEngine>) -> Router {
    Router::new()
        .route("/api/search", post(search))
        .route("/api/videos/{video_id}/keyframes", get(video_keyframes))
        .route("/api/keyframes/{id}/thumbnail", get(thumbnail))
        .route("/api/config", get(config))
        .with_state(engine)
}

async fn search(
    State(engine): State<Arc<SearchEngine>>,
    body: Result<Json<QueryRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.body_text()))?;
    let resp = tokio::task::spawn_blocking(move || engine.search(&req))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    tracing::debug!(
        candidates = resp.candidate_count,
        timing_ms = resp.timing_ms,
        "search"
    );
    Ok(Json(resp).into_response())
}

async fn video_keyframes(
    State(engine): State<Arc<SearchEngine>>,
    Path(video_id): Path<String>,
) -> Result<Response, ApiError> {
    let frames = engine
        .video_keyframes(&video_id)
        .ok_or_else(|| ApiError::not_found(&format!("video {video_id:?}")))?;
    Ok(Json(frames).into_response())
}

fn content_type(bytes: &[u8]) -> &'static str {
    if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        "image/png"
    } else if bytes.starts_with(&[0xFF, 0xD8, 0xFF]) {
        "image/jpeg"
    } else {
        "application/octet-stream"
    }
}

async fn thumbnail(
    State(engine): State<Arc<SearchEngine>>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let missing = || ApiError::not_found(&format!("thumbnail for {id:?}"));
    let path = engine.thumbnail_path(&id).ok_or_else(missing)?;
    let bytes = match tokio::fs::read(&path).await {
        Ok(b) => b,
        Err(e) => {
            tracing::warn!(path = %path.display(), error = %e, "thumbnail unreadable");
            return Err(missing());
        }
    };
    Ok(([(header::CONTENT_TYPE, content_type(&bytes))], bytes).into_response())
}

async fn config() -> Json<ConfigView> {
    Json(ConfigView::current())
}

/// Serves until ctrl-c.
pub async fn serve(engine: Arc<SearchEngine>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(engine))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
