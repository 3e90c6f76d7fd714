//! HTTP front end for retrieval and answering.
//!
//! `GET /health`, `POST /retrieve`, `POST /rag` and `POST /admin/reload`.
//! Every body is JSON with a `v` field; errors are
//! `{"v":1,"error":{"stage":..,"message":..}}`. The service starts (and
//! stays up) without an index and answers 503 until one is loaded.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::thread::{self, JoinHandle};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use thiserror::Error;
use tokio::sync::oneshot;

use super::{answer, Generator, PromptTemplate, RagError, RagRequest, SCHEMA_VERSION};
use crate::index::{load_index, Embedder, HybridIndex, IndexError, RetrievalMode};

/// Index slot swapped atomically on reload.
pub type SharedIndex = Arc<RwLock<Option<Arc<HybridIndex>>>>;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("cannot bind {0}: {1}")]
    Bind(String, std::io::Error),
    #[error("runtime: {0}")]
    Runtime(std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub bind: String,
    /// Loaded at startup when present; a load failure leaves the service up
    /// without an index.
    pub index_dir: Option<PathBuf>,
    pub template: PromptTemplate,
    pub default_k: usize,
    pub default_mode: RetrievalMode,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8000".into(),
            index_dir: None,
            template: PromptTemplate::default(),
            default_k: 3,
            default_mode: RetrievalMode::default(),
        }
    }
}

#[derive(Clone)]
struct AppState {
    index: SharedIndex,
    index_dir: Arc<RwLock<Option<PathBuf>>>,
    embedder: Arc<dyn Embedder>,
    generator: Arc<dyn Generator>,
    config: Arc<ServiceConfig>,
}

fn error(status: StatusCode, stage: &str, message: impl ToString) -> Response {
    (status, Json(json!({"v": SCHEMA_VERSION, "error": {"stage": stage, "message": message.to_string()}})))
        .into_response()
}

fn rag_error(e: &RagError) -> Response {
    let status = match e {
        RagError::IndexUnavailable => StatusCode::SERVICE_UNAVAILABLE,
        RagError::GeneratorFailure(_) => StatusCode::BAD_GATEWAY,
        RagError::UnknownTemplate(_) | RagError::InvalidTemplate(_) => StatusCode::BAD_REQUEST,
        RagError::Retrieval(IndexError::Embed(_)) => StatusCode::BAD_GATEWAY,
        RagError::Retrieval(_) => StatusCode::INTERNAL_SERVER_ERROR,
    };
    error(status, e.stage(), e)
}

fn parse<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, Response> {
    serde_json::from_slice(body).map_err(|e| error(StatusCode::BAD_REQUEST, "request", format!("invalid body: {e}")))
}

fn current(state: &AppState) -> Option<Arc<HybridIndex>> {
    state.index.read().unwrap_or_else(|p| p.into_inner()).clone()
}

fn check_embedder(index: &HybridIndex, embedder: &dyn Embedder) -> Result<(), IndexError> {
    match index.embedder_identity() {
        Some(id) if id != embedder.identity() => {
            Err(IndexError::EmbedderMismatch { expected: id.to_string(), got: embedder.identity() })
        }
        _ => Ok(()),
    }
}

async fn health(State(state): State<AppState>) -> Response {
    let idx = current(&state);
    Json(json!({
        "v": SCHEMA_VERSION,
        "status": if idx.is_some() { "ok" } else { "no_index" },
        "chunks": idx.as_ref().map_or(0, |i| i.len()),
        "embedder": state.embedder.identity(),
        "generator": state.generator.identity(),
    }))
    .into_response()
}

#[derive(Deserialize)]
struct RetrieveBody {
    query: String,
    #[serde(default)]
    k: Option<usize>,
    #[serde(default)]
    mode: Option<RetrievalMode>,
}

async fn retrieve(State(state): State<AppState>, body: Bytes) -> Response {
    let req: RetrieveBody = match parse(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    let Some(index) = current(&state) else { return rag_error(&RagError::IndexUnavailable) };
    let k = req.k.unwrap_or(state.config.default_k);
    let mode = req.mode.unwrap_or(state.config.default_mode);
    let embedder = Arc::clone(&state.embedder);
    let result = tokio::task::spawn_blocking(move || {
        index.search(&req.query, k, mode, embedder.as_ref()).map(|hits| {
            hits.into_iter()
                .map(|h| {
                    let chunk = index.chunk(&h.chunk_id);
                    json!({
                        "chunk_id": h.chunk_id,
                        "doc_id": chunk.map(|c| c.doc_id.clone()),
                        "score": h.score,
                        "rank": h.rank,
                        "text": chunk.map(|c| c.text.clone()),
                    })
                })
                .collect::<Vec<Value>>()
        })
    })
    .await;
    match result {
        Ok(Ok(hits)) => Json(json!({"v": SCHEMA_VERSION, "hits": hits})).into_response(),
        Ok(Err(e)) => rag_error(&RagError::Retrieval(e)),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "retrieve", e),
    }
}

#[derive(Deserialize)]
struct RagBody {
    query: String,
    #[serde(default)]
    k: Option<usize>,
    #[serde(default)]
    mode: Option<RetrievalMode>,
}

async fn rag(State(state): State<AppState>, body: Bytes) -> Response {
    let req: RagBody = match parse(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    let Some(index) = current(&state) else { return rag_error(&RagError::IndexUnavailable) };
    let request = RagRequest {
        query: req.query,
        k: req.k.unwrap_or(state.config.default_k),
        mode: req.mode.unwrap_or(state.config.default_mode),
        template_id: None,
    };
    let st = state.clone();
    let result = tokio::task::spawn_blocking(move || {
        answer(&request, &index, st.embedder.as_ref(), st.generator.as_ref(), &st.config.template)
    })
    .await;
    match result {
        Ok(Ok(resp)) => {
            let mut v = serde_json::to_value(&resp).unwrap_or(Value::Null);
            v["v"] = json!(SCHEMA_VERSION);
            Json(v).into_response()
        }
        Ok(Err(e)) => rag_error(&e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "generate", e),
    }
}

#[derive(Deserialize, Default)]
struct ReloadBody {
    #[serde(default)]
    index_dir: Option<PathBuf>,
}

async fn reload(State(state): State<AppState>, body: Bytes) -> Response {
    let req: ReloadBody = if body.is_empty() {
        ReloadBody::default()
    } else {
        match parse(&body) {
            Ok(r) => r,
            Err(resp) => return resp,
        }
    };
    let dir = req.index_dir.or_else(|| state.index_dir.read().unwrap_or_else(|p| p.into_inner()).clone());
    let Some(dir) = dir else {
        return error(StatusCode::BAD_REQUEST, "reload", "no index directory configured");
    };
    let embedder = Arc::clone(&state.embedder);
    let d = dir.clone();
    let loaded = tokio::task::spawn_blocking(move || {
        let idx = load_index(&d)?;
        check_embedder(&idx, embedder.as_ref())?;
        Ok::<_, IndexError>(idx)
    })
    .await;
    match loaded {
        Ok(Ok(idx)) => {
            let chunks = idx.len();
            *state.index.write().unwrap_or_else(|p| p.into_inner()) = Some(Arc::new(idx));
            *state.index_dir.write().unwrap_or_else(|p| p.into_inner()) = Some(dir);
            Json(json!({"v": SCHEMA_VERSION, "status": "reloaded", "chunks": chunks})).into_response()
        }
        Ok(Err(e)) => error(StatusCode::UNPROCESSABLE_ENTITY, "reload", e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "reload", e),
    }
}

fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/retrieve", post(retrieve))
        .route("/rag", post(rag))
        .route("/admin/reload", post(reload))
        .with_state(state)
}

/// Running service; dropping it (or calling [`ServiceHandle::shutdown`])
/// stops accepting and drains in-flight requests.
pub struct ServiceHandle {
    addr: SocketAddr,
    index: SharedIndex,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl ServiceHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn index(&self) -> SharedIndex {
        Arc::clone(&self.index)
    }

    /// Blocks until the server exits (e.g. after Ctrl-C when started with
    /// `ctrl_c`).
    pub fn join(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        self.stop_now();
    }
}

/// Starts the service on a background runtime. With `ctrl_c`, an interrupt
/// signal also triggers graceful shutdown.
pub fn serve(
    config: ServiceConfig,
    embedder: Arc<dyn Embedder>,
    generator: Arc<dyn Generator>,
    ctrl_c: bool,
) -> Result<ServiceHandle, ServiceError> {
    let index: SharedIndex = Arc::new(RwLock::new(None));
    if let Some(dir) = &config.index_dir {
        match load_index(dir).and_then(|i| check_embedder(&i, embedder.as_ref()).map(|()| i)) {
            Ok(i) => *index.write().unwrap_or_else(|p| p.into_inner()) = Some(Arc::new(i)),
            Err(e) => log::warn!("starting without index: {e}"),
        }
    }
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(ServiceError::Runtime)?;
    let std_listener =
        std::net::TcpListener::bind(&config.bind).map_err(|e| ServiceError::Bind(config.bind.clone(), e))?;
    std_listener.set_nonblocking(true).map_err(ServiceError::Runtime)?;
    let addr = std_listener.local_addr().map_err(ServiceError::Runtime)?;
    let state = AppState {
        index: Arc::clone(&index),
        index_dir: Arc::new(RwLock::new(config.index_dir.clone())),
        embedder,
        generator,
        config: Arc::new(config),
    };
    let (tx, rx) = oneshot::channel::<()>();
    let thread = thread::spawn(move || {
        runtime.block_on(async move {
            let listener = match tokio::net::TcpListener::from_std(std_listener) {
                Ok(l) => l,
                Err(e) => {
                    log::error!("listener: {e}");
                    return;
                }
            };
            let shutdown = async move {
                if ctrl_c {
                    tokio::select! {
                        _ = rx => {}
                        _ = tokio::signal::ctrl_c() => {}
                    }
                } else {
                    let _ = rx.await;
                }
            };
            if let Err(e) = axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await {
                log::error!("server: {e}");
            }
        });
    });
    log::info!("serving on http://{addr}");
    Ok(ServiceHandle { addr, index, stop: Some(tx), thread: Some(thread) })
}
