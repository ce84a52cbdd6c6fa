//! HTTP planning service.
//!
//! Scenes are uploaded once and addressed by the SHA-256 of their canonical
//! JSON. Plans run as queued jobs on a bounded worker pool; their artifacts
//! are written to disk and served read-only once the job is done. Every
//! JSON payload carries a `v` field.
//!
//! | Method | Path | |
//! |---|---|---|
//! | POST | `/scenes` | upload a scene, `201` + id |
//! | GET | `/scenes/{id}` | canonical scene JSON |
//! | POST | `/plans` | submit a plan, `202` + job id |
//! | GET | `/plans/{id}` | job state and progress |
//! | GET | `/plans/{id}/result` | plan result |
//! | GET | `/plans/{id}/slice?z=` | horizontal slice |
//! | GET | `/plans/{id}/cdf` | coverage CDFs, best and initial position |
//! | GET | `/plans/{id}/map` | radio-map container (`f32le`) |
//! | GET | `/plans/{id}/map/meta` | container sidecar |
//! | POST | `/overlay` | radio map projected into a camera frame |
//! | GET | `/healthz` | liveness |

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use radioplan_core::{load_scene, Scene};
use serde::Serialize;
use tokio::sync::Semaphore;

pub mod api;
pub mod error;
pub mod jobs;
pub mod store;

pub use error::{ApiError, ServiceError};
use jobs::JobTable;
use store::Store;

pub const API_VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub bind: SocketAddr,
    /// When set, every endpoint except `/healthz` requires
    /// `Authorization: Bearer <token>`.
    pub token: Option<String>,
    /// Planning jobs that may run at once.
    pub workers: usize,
    /// Jobs that may wait for a worker before submissions are refused.
    pub queue_depth: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("radioplan-data"),
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            token: None,
            workers: 1,
            queue_depth: 8,
        }
    }
}

/// A payload with the API version prepended.
#[derive(Debug, Serialize)]
pub struct Versioned<T> {
    pub v: u32,
    #[serde(flatten)]
    pub body: T,
}

impl<T> Versioned<T> {
    pub fn new(body: T) -> Self {
        Self { v: API_VERSION, body }
    }
}

#[derive(Clone, Debug)]
pub enum SceneSlot {
    Uploading,
    Ready(Arc<Scene>),
}

#[derive(Debug, PartialEq, Eq)]
pub enum UploadStart {
    New,
    Existing,
    InProgress,
}

pub struct AppState {
    pub config: ServiceConfig,
    pub store: Store,
    pub jobs: JobTable,
    pub workers: Arc<Semaphore>,
    scenes: Mutex<HashMap<String, SceneSlot>>,
    seq: AtomicU64,
    boot_nanos: u128,
}

impl AppState {
    /// Opens the data directory and reloads stored scenes and finished plans.
    pub fn open(config: ServiceConfig) -> Result<Arc<Self>, ServiceError> {
        let store = Store::open(&config.data_dir)?;
        let mut scenes = HashMap::new();
        for id in store.scene_ids()? {
            let text = String::from_utf8_lossy(&store.scene_bytes(&id)?).into_owned();
            match load_scene(&text) {
                Ok(scene) => {
                    scenes.insert(id, SceneSlot::Ready(Arc::new(scene)));
                }
                Err(e) => tracing::warn!(scene = %id, error = %e, "skipping unreadable scene"),
            }
        }
        let jobs = JobTable::default();
        jobs::recover(&store, &jobs)?;
        let boot_nanos = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0);
        Ok(Arc::new(Self {
            workers: Arc::new(Semaphore::new(config.workers.max(1))),
            config,
            store,
            jobs,
            scenes: Mutex::new(scenes),
            seq: AtomicU64::new(0),
            boot_nanos,
        }))
    }

    pub fn scene_slot(&self, id: &str) -> Option<SceneSlot> {
        self.scenes.lock().unwrap().get(id).cloned()
    }

    /// Claims `id` for an upload unless it is already stored or in flight.
    pub fn begin_upload(&self, id: &str) -> UploadStart {
        let mut scenes = self.scenes.lock().unwrap();
        match scenes.get(id) {
            Some(SceneSlot::Ready(_)) => UploadStart::Existing,
            Some(SceneSlot::Uploading) => UploadStart::InProgress,
            None => {
                scenes.insert(id.to_string(), SceneSlot::Uploading);
                UploadStart::New
            }
        }
    }

    pub fn finish_upload(&self, id: &str, scene: Scene) {
        self.scenes.lock().unwrap().insert(id.to_string(), SceneSlot::Ready(Arc::new(scene)));
    }

    pub fn abort_upload(&self, id: &str) {
        self.scenes.lock().unwrap().remove(id);
    }

    fn next_job_id(&self, request: &[u8]) -> String {
        let n = self.seq.fetch_add(1, Ordering::Relaxed);
        let mut seed = request.to_vec();
        seed.extend_from_slice(&n.to_le_bytes());
        seed.extend_from_slice(&self.boot_nanos.to_le_bytes());
        store::content_id(&seed)[..16].to_string()
    }
}

async fn require_token(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.config.token {
        let presented = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|h| h.to_str().ok())
            .and_then(|h| h.strip_prefix("Bearer "));
        if presented != Some(token.as_str()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "auth", "missing or invalid bearer token").into_response();
        }
    }
    next.run(req).await
}

pub fn router(state: Arc<AppState>) -> Router {
    let protected = Router::new()
        .route("/scenes", post(api::upload_scene))
        .route("/scenes/{id}", get(api::get_scene))
        .route("/plans", post(api::submit_plan))
        .route("/plans/{id}", get(api::plan_status))
        .route("/plans/{id}/result", get(api::plan_result))
        .route("/plans/{id}/slice", get(api::plan_slice))
        .route("/plans/{id}/cdf", get(api::plan_cdf))
        .route("/plans/{id}/map", get(api::plan_map))
        .route("/plans/{id}/map/meta", get(api::plan_map_meta))
        .route("/overlay", post(api::overlay))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new().route("/healthz", get(api::healthz)).merge(protected).with_state(state)
}

/// Serves until Ctrl-C.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// Opens the store, binds and serves on a new runtime. `on_ready` receives
/// the bound address before the first request is accepted.
pub fn run(config: ServiceConfig, on_ready: impl FnOnce(SocketAddr)) -> Result<(), ServiceError> {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let state = AppState::open(config.clone())?;
        let listener = tokio::net::TcpListener::bind(config.bind).await?;
        on_ready(listener.local_addr()?);
        serve(listener, state).await?;
        Ok(())
    })
}
