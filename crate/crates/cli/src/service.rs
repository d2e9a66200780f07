//! HTTP service over a loaded cache.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};

use scenemem::cache::{CacheError, SceneCache, DEFAULT_SUBSAMPLE};
use scenemem::geometry::Camera;
use scenemem::report::{valid_doc_id, TrajectoryDoc};
use scenemem::retrieval::{RetrievalConfig, RetrievalError};
use scenemem::warp::WarpError;

use crate::api::{self, VisibilityRequest, WarpRequest};
use crate::lock::CacheLock;

pub const BIND_ENV: &str = "SCENEMEM_BIND";
pub const DEFAULT_BIND: &str = "127.0.0.1:8080";
pub const TRAJECTORY_DIR: &str = "trajectories";

/// Bind address from the environment, else the built-in default.
pub fn default_bind() -> String {
    std::env::var(BIND_ENV).ok().filter(|s| !s.is_empty()).unwrap_or_else(|| DEFAULT_BIND.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub bind: String,
    pub cache: PathBuf,
    pub n_s: usize,
    pub delta: f64,
    pub d: u32,
    /// Allowed browser origins; empty disables CORS headers.
    pub cors: Vec<String>,
}

impl ServiceConfig {
    pub fn new(cache: impl Into<PathBuf>) -> Self {
        let r = RetrievalConfig::default();
        ServiceConfig { bind: default_bind(), cache: cache.into(), n_s: r.n_s, delta: r.delta, d: DEFAULT_SUBSAMPLE, cors: vec![] }
    }

    fn retrieval(&self) -> RetrievalConfig {
        RetrievalConfig { n_s: self.n_s, delta: self.delta, ..Default::default() }
    }
}

pub struct AppState {
    config: ServiceConfig,
    cache: SceneCache,
    docs: TrajectoryStore,
}

impl AppState {
    /// `config.d` is replaced by the cache's own subsample factor.
    pub fn new(mut config: ServiceConfig, cache: SceneCache) -> Self {
        config.d = cache.subsample();
        let docs = TrajectoryStore::new(config.cache.join(TRAJECTORY_DIR));
        AppState { config, cache, docs }
    }

    pub fn load(config: ServiceConfig) -> Result<Self, CacheError> {
        let cache = SceneCache::load(&config.cache)?;
        Ok(Self::new(config, cache))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn internal(message: impl ToString) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

impl From<CacheError> for ApiError {
    fn from(e: CacheError) -> Self {
        match e {
            CacheError::NotFound(_) => ApiError::new(StatusCode::NOT_FOUND, e.to_string()),
            other => ApiError::internal(other),
        }
    }
}

impl From<RetrievalError> for ApiError {
    fn from(e: RetrievalError) -> Self {
        match e {
            RetrievalError::InvalidConfig(_) => ApiError::bad_request(e.to_string()),
            other => ApiError::internal(other),
        }
    }
}

impl From<WarpError> for ApiError {
    fn from(e: WarpError) -> Self {
        match e {
            WarpError::Cache(c) => c.into(),
            WarpError::TooManyMaps { .. } | WarpError::SlotOutOfRange { .. } => ApiError::bad_request(e.to_string()),
            other => ApiError::internal(other),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed request: {e}")))
}

fn parse_camera(j: &scenemem::geometry::CameraJson) -> ApiResult<Camera> {
    Camera::try_from(j).map_err(|e| ApiError::bad_request(format!("malformed camera: {e}")))
}

pub fn router(state: Arc<AppState>) -> Router {
    let cors = &state.config.cors;
    let app = Router::new()
        .route("/frames", get(frames))
        .route("/frames/{id}/points", get(points))
        .route("/visibility", post(visibility))
        .route("/retrieve", post(visibility))
        .route("/warp", post(warp))
        .route("/trajectories", get(list_docs).post(create_doc).put(put_doc_body))
        .route("/trajectories/{id}", get(get_doc).put(put_doc))
        .route("/config", get(config));
    let app = if cors.is_empty() {
        app
    } else {
        let origins: Vec<HeaderValue> = cors.iter().filter_map(|o| HeaderValue::from_str(o).ok()).collect();
        app.layer(
            CorsLayer::new()
                .allow_origin(AllowOrigin::list(origins))
                .allow_methods([Method::GET, Method::POST, Method::PUT])
                .allow_headers([header::CONTENT_TYPE]),
        )
    };
    app.with_state(state)
}

/// Runs until Ctrl-C, holding the cache's advisory lock.
pub async fn serve(config: ServiceConfig) -> anyhow::Result<()> {
    let _lock = CacheLock::acquire(&config.cache)?;
    let addr: SocketAddr = config.bind.parse().map_err(|e| anyhow::anyhow!("bad bind address {:?}: {e}", config.bind))?;
    let state = Arc::new(AppState::load(config)?);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("serving {} frames on http://{}", state.cache.frame_count(), listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

async fn frames(State(s): State<Arc<AppState>>) -> Json<Vec<api::FrameInfo>> {
    Json(api::frame_list(&s.cache))
}

async fn points(State(s): State<Arc<AppState>>, UrlPath(id): UrlPath<u64>) -> ApiResult<Response> {
    let blob = api::point_blob(&s.cache, id)?;
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], blob).into_response())
}

async fn visibility(State(s): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<api::RetrievalResponse>> {
    let req: VisibilityRequest = parse_body(&body)?;
    let camera = parse_camera(&req.camera)?;
    let mut cfg = s.config.retrieval();
    cfg.n_s = req.n_s.unwrap_or(cfg.n_s);
    cfg.delta = req.delta.unwrap_or(cfg.delta);
    let state = s.clone();
    let resp = tokio::task::spawn_blocking(move || api::retrieve(&state.cache, &camera, &cfg, req.per_cell))
        .await
        .map_err(ApiError::internal)??;
    Ok(Json(resp))
}

async fn warp(State(s): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<api::WarpResponse>> {
    let req: WarpRequest = parse_body(&body)?;
    let camera = parse_camera(&req.camera)?;
    let n_s = req.n_s.unwrap_or(s.config.n_s).max(req.frame_ids.len());
    let state = s.clone();
    let (_, resp) = tokio::task::spawn_blocking(move || api::warp(&state.cache, &camera, &req.frame_ids, n_s))
        .await
        .map_err(ApiError::internal)??;
    Ok(Json(resp))
}

async fn config(State(s): State<Arc<AppState>>) -> Json<ServiceConfig> {
    Json(s.config.clone())
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// JSON documents under `<cache>/trajectories`, one file per id.
struct TrajectoryStore {
    dir: PathBuf,
    locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

impl TrajectoryStore {
    fn new(dir: PathBuf) -> Self {
        TrajectoryStore { dir, locks: Mutex::new(HashMap::new()) }
    }

    fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    fn doc_lock(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        self.locks.lock().expect("lock map poisoned").entry(id.to_string()).or_default().clone()
    }

    async fn read(&self, id: &str) -> ApiResult<Option<TrajectoryDoc>> {
        match tokio::fs::read(self.path(id)).await {
            Ok(bytes) => serde_json::from_slice(&bytes).map(Some).map_err(ApiError::internal),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(ApiError::internal(e)),
        }
    }

    async fn write(&self, doc: &TrajectoryDoc) -> ApiResult<()> {
        tokio::fs::create_dir_all(&self.dir).await.map_err(ApiError::internal)?;
        let path = self.path(&doc.id);
        let tmp = path.with_extension("json.tmp");
        let text = serde_json::to_vec_pretty(doc).map_err(ApiError::internal)?;
        tokio::fs::write(&tmp, text).await.map_err(ApiError::internal)?;
        tokio::fs::rename(&tmp, &path).await.map_err(ApiError::internal)
    }

    async fn list(&self) -> ApiResult<Vec<TrajectoryDoc>> {
        let mut docs = Vec::new();
        let mut dir = match tokio::fs::read_dir(&self.dir).await {
            Ok(d) => d,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(docs),
            Err(e) => return Err(ApiError::internal(e)),
        };
        while let Some(entry) = dir.next_entry().await.map_err(ApiError::internal)? {
            let p = entry.path();
            if p.extension().is_some_and(|e| e == "json") {
                if let Some(id) = p.file_stem().and_then(|s| s.to_str()) {
                    if let Some(doc) = self.read(id).await? {
                        docs.push(doc);
                    }
                }
            }
        }
        docs.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(docs)
    }
}

fn checked_doc(body: &[u8]) -> ApiResult<TrajectoryDoc> {
    let doc: TrajectoryDoc = parse_body(body)?;
    doc.validate().map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(doc)
}

async fn list_docs(State(s): State<Arc<AppState>>) -> ApiResult<Json<Vec<TrajectoryDoc>>> {
    Ok(Json(s.docs.list().await?))
}

async fn get_doc(State(s): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<TrajectoryDoc>> {
    if !valid_doc_id(&id) {
        return Err(ApiError::bad_request(format!("invalid trajectory id {id:?}")));
    }
    s.docs.read(&id).await?.map(Json).ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("trajectory {id} not found")))
}

async fn create_doc(State(s): State<Arc<AppState>>, body: Bytes) -> ApiResult<(StatusCode, Json<TrajectoryDoc>)> {
    let mut doc = checked_doc(&body)?;
    let lock = s.docs.doc_lock(&doc.id);
    let _guard = lock.lock().await;
    if s.docs.read(&doc.id).await?.is_some() {
        return Err(ApiError::new(StatusCode::CONFLICT, format!("trajectory {} already exists", doc.id)));
    }
    let t = now();
    doc.created = t;
    doc.modified = t;
    s.docs.write(&doc).await?;
    Ok((StatusCode::CREATED, Json(doc)))
}

async fn upsert(s: &AppState, mut doc: TrajectoryDoc) -> ApiResult<Json<TrajectoryDoc>> {
    let lock = s.docs.doc_lock(&doc.id);
    let _guard = lock.lock().await;
    let t = now();
    doc.created = s.docs.read(&doc.id).await?.map_or(t, |old| old.created);
    doc.modified = t;
    s.docs.write(&doc).await?;
    Ok(Json(doc))
}

async fn put_doc(
    State(s): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Json<TrajectoryDoc>> {
    let doc = checked_doc(&body)?;
    if doc.id != id {
        return Err(ApiError::bad_request(format!("body id {:?} does not match path id {id:?}", doc.id)));
    }
    upsert(&s, doc).await
}

async fn put_doc_body(State(s): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<TrajectoryDoc>> {
    let doc = checked_doc(&body)?;
    upsert(&s, doc).await
}

/// Trajectory document path for an id inside a cache directory.
pub fn trajectory_path(cache_dir: &Path, id: &str) -> PathBuf {
    cache_dir.join(TRAJECTORY_DIR).join(format!("{id}.json"))
}
