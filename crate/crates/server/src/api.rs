//! HTTP routes.
//!
//! ```text
//! POST /v1/recommend   QueryRequest -> QueryResponse
//! GET  /v1/health      {"status":"ok","generation":G,"docs":N}
//! POST /v1/refresh     optional {"schema": path, "catalog": path}; 202
//! ```

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use tokio::net::TcpListener;

use crate::artifacts::Sources;
use crate::state::{QueryRequest, ServiceError, ServiceState};

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::NoSnapshot | ServiceError::Unavailable(_) => {
                StatusCode::SERVICE_UNAVAILABLE
            }
            ServiceError::Internal(_) | ServiceError::Refresh(_) | ServiceError::NoSources => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        (self.status(), Json(json!({ "error": self.to_string() }))).into_response()
    }
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/v1/recommend", post(recommend))
        .route("/v1/health", get(health))
        .route("/v1/refresh", post(refresh))
        .with_state(state)
}

async fn recommend(
    State(state): State<Arc<ServiceState>>,
    body: Result<Json<QueryRequest>, JsonRejection>,
) -> Result<Response, ServiceError> {
    let Json(req) = body.map_err(|e| ServiceError::BadRequest(e.body_text()))?;
    let resp = tokio::task::spawn_blocking(move || state.handle_query(&req))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))??;
    Ok(Json(resp).into_response())
}

async fn health(State(state): State<Arc<ServiceState>>) -> Response {
    Json(state.health()).into_response()
}

async fn refresh(
    State(state): State<Arc<ServiceState>>,
    body: Bytes,
) -> Result<Response, ServiceError> {
    let sources: Option<Sources> = if body.iter().all(u8::is_ascii_whitespace) {
        None
    } else {
        serde_json::from_slice(&body).map_err(|e| ServiceError::BadRequest(e.to_string()))?
    };
    tokio::task::spawn_blocking(move || {
        if let Err(e) = state.refresh(sources) {
            tracing::error!(error = %e, "refresh failed; previous snapshot still serving");
        }
    });
    Ok((StatusCode::ACCEPTED, Json(json!({ "status": "accepted" }))).into_response())
}

/// Binds `addr` and serves until `shutdown` resolves.
pub async fn serve(
    state: Arc<ServiceState>,
    listener: TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

/// Starts the service on a background runtime thread; returns the bound
/// address and a handle that stops the server when dropped.
pub fn spawn(state: Arc<ServiceState>, addr: SocketAddr) -> std::io::Result<RunningServer> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    let listener = rt.block_on(TcpListener::bind(addr))?;
    let local = listener.local_addr()?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        rt.block_on(async move {
            let _ = serve(state, listener, async {
                let _ = rx.await;
            })
            .await;
        });
    });
    Ok(RunningServer {
        addr: local,
        stop: Some(tx),
        thread: Some(thread),
    })
}

pub struct RunningServer {
    pub addr: SocketAddr,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl RunningServer {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
