use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

use crate::api::{handle_select, ApiError, AppState, SelectRequest};
use crate::config::{ConfigError, ServiceConfig};

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status =
            StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self.body())).into_response()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
    pub categories: Vec<String>,
}

async fn select(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    // parsed by hand so malformed bodies get the structured error
    let req: SelectRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::BadRequest(format!("malformed request: {e}")))?;
    let resp = handle_select(&state, req).await?;
    Ok(Json(resp).into_response())
}

async fn health(State(state): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        categories: state.deps.registry.categories(),
    })
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/select", post(select))
        .route("/v1/health", get(health))
        .with_state(state)
}

pub async fn serve_on(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Loads models per `cfg` and serves until the process is stopped.
pub async fn run(cfg: &ServiceConfig) -> Result<(), ServeError> {
    let state = AppState::new(cfg.pipeline_deps()?, cfg.fetch);
    let addr = format!("{}:{}", cfg.host, cfg.port);
    let listener = TcpListener::bind(&addr)
        .await
        .map_err(|source| ServeError::Bind {
            addr: addr.clone(),
            source,
        })?;
    log::info!(
        "listening on {} with categories {:?}",
        listener.local_addr()?,
        state.deps.registry.categories()
    );
    serve_on(listener, state).await?;
    Ok(())
}
