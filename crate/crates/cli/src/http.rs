//! The `/v1` HTTP surface.

use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::api::{self, FitRequest, LibraryParams, QueryRequest, ServiceState};
use crate::error::{AppError, AppResult};

/// The live service state. Readers take a snapshot; ingest builds a full
/// replacement and swaps it in, so no request sees a half-built index.
#[derive(Debug)]
pub struct SharedState {
    inner: RwLock<Arc<ServiceState>>,
}

impl SharedState {
    pub fn new(state: ServiceState) -> Arc<Self> {
        Arc::new(SharedState {
            inner: RwLock::new(Arc::new(state)),
        })
    }

    pub fn snapshot(&self) -> Arc<ServiceState> {
        self.inner.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn replace(&self, state: ServiceState) {
        *self.inner.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(state);
    }
}

pub fn router(state: Arc<SharedState>) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/presets", get(presets))
        .route("/v1/library", get(library))
        .route("/v1/query", post(query))
        .route("/v1/fit", post(fit))
        .route("/v1/ingest", post(ingest))
        .fallback(not_found)
        .with_state(state)
}

fn json<T: Serialize>(status: StatusCode, value: &T) -> Response {
    match serde_json::to_vec(value) {
        Ok(body) => (status, [(header::CONTENT_TYPE, "application/json")], body).into_response(),
        Err(e) => error_response(AppError::Core(e.into())),
    }
}

fn error_response(err: AppError) -> Response {
    let status = StatusCode::from_u16(err.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    json(status, &err.body())
}

fn respond<T: Serialize>(result: AppResult<T>) -> Response {
    match result {
        Ok(value) => json(StatusCode::OK, &value),
        Err(e) => error_response(e),
    }
}

fn parse_body<T: DeserializeOwned + Default>(body: &Bytes) -> AppResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| AppError::Malformed(e.to_string()))
}

/// Serializes a query response exactly as the `/v1/query` endpoint does.
pub fn query_body(response: &api::QueryResponse) -> AppResult<String> {
    serde_json::to_string(response).map_err(|e| AppError::Core(e.into()))
}

async fn health(State(shared): State<Arc<SharedState>>) -> Response {
    respond(Ok(api::health(&shared.snapshot())))
}

async fn presets(State(shared): State<Arc<SharedState>>) -> Response {
    respond(Ok(api::presets(&shared.snapshot())))
}

async fn library(
    State(shared): State<Arc<SharedState>>,
    params: Result<Query<LibraryParams>, QueryRejection>,
) -> Response {
    match params {
        Ok(Query(p)) => respond(api::library(&shared.snapshot(), &p)),
        Err(e) => error_response(AppError::Malformed(e.body_text())),
    }
}

async fn query(State(shared): State<Arc<SharedState>>, body: Bytes) -> Response {
    let result = parse_body::<QueryRequest>(&body).and_then(|req| api::run_query(&shared.snapshot(), &req));
    match result.and_then(|r| query_body(&r)) {
        Ok(text) => (StatusCode::OK, [(header::CONTENT_TYPE, "application/json")], text).into_response(),
        Err(e) => error_response(e),
    }
}

async fn fit(State(shared): State<Arc<SharedState>>, body: Bytes) -> Response {
    let req: FitRequest = match parse_body(&body) {
        Ok(r) => r,
        Err(e) => return error_response(e),
    };
    let state = shared.snapshot();
    let joined = tokio::task::spawn_blocking(move || api::run_fit(&state.workspace, &state.settings, &req)).await;
    match joined {
        Ok(result) => respond(result),
        Err(e) => error_response(AppError::Core(stemsim_core::Error::Io(std::io::Error::other(e.to_string())))),
    }
}

/// New data locations for `/v1/ingest`; unset fields keep the current ones.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestRequest {
    pub packs: Option<Vec<PathBuf>>,
    pub triplets: Option<Vec<PathBuf>>,
    pub presets: Option<PathBuf>,
}

async fn ingest(State(shared): State<Arc<SharedState>>, body: Bytes) -> Response {
    let req: IngestRequest = match parse_body(&body) {
        Ok(r) => r,
        Err(e) => return error_response(e),
    };
    let mut settings = shared.snapshot().settings.clone();
    if let Some(p) = req.packs {
        settings.packs = p;
    }
    if let Some(t) = req.triplets {
        settings.triplets = t;
    }
    if req.presets.is_some() {
        settings.presets = req.presets;
    }
    let built = tokio::task::spawn_blocking(move || ServiceState::load(settings)).await;
    match built {
        Ok(Ok(state)) => {
            let summary = api::health(&state);
            shared.replace(state);
            respond(Ok(summary))
        }
        Ok(Err(e)) => error_response(e),
        Err(e) => error_response(AppError::Core(stemsim_core::Error::Io(std::io::Error::other(e.to_string())))),
    }
}

async fn not_found() -> Response {
    json(
        StatusCode::NOT_FOUND,
        &crate::error::ErrorBody {
            error_code: "NotFound".into(),
            message: "no such endpoint".into(),
        },
    )
}

/// Serves until ctrl-c.
pub async fn serve(state: Arc<SharedState>, addr: std::net::SocketAddr) -> AppResult<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
