//! Request handlers.

use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use radioplan_core::export::{read_radio_map, read_weight_map, sidecar_path};
use radioplan_core::projection::OverlayOptions;
use radioplan_core::radiomap::cdf_quantile;
use radioplan_core::{
    build_weight_map, coverage_cdf, horizontal_slice, load_scene, project_radio_map, CameraPose, DeploymentRegion, GridSpec,
    Intrinsics, PlanConfig, RadioMap,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::ApiError;
use crate::jobs::{execute, status_body, Job, JobState, StoredRequest};
use crate::store::{content_id, is_valid_id, INITIAL_MAP_FILE, MAP_FILE, REQUEST_FILE, RESULT_FILE, WEIGHTS_FILE};
use crate::{AppState, SceneSlot, UploadStart, Versioned, API_VERSION};

type Shared = State<Arc<AppState>>;

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(e.to_string()))
}

fn check_version(v: u32) -> Result<(), ApiError> {
    if v == API_VERSION {
        Ok(())
    } else {
        Err(ApiError::bad_request(format!("unsupported version {v}, expected {API_VERSION}")))
    }
}

fn json_bytes(status: StatusCode, bytes: Vec<u8>) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], bytes).into_response()
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))?
}

pub async fn healthz() -> Json<serde_json::Value> {
    Json(json!({ "v": API_VERSION, "status": "ok" }))
}

pub async fn upload_scene(State(state): Shared, body: Bytes) -> Result<Response, ApiError> {
    let text = std::str::from_utf8(&body).map_err(|_| ApiError::bad_request("body is not UTF-8"))?;
    let scene = load_scene(text)?;
    let canonical = scene.to_json();
    let id = content_id(canonical.as_bytes());
    let reply = |status| (status, Json(json!({ "v": API_VERSION, "id": id, "name": scene.name }))).into_response();
    match state.begin_upload(&id) {
        UploadStart::Existing => return Ok(reply(StatusCode::OK)),
        UploadStart::InProgress => return Err(ApiError::conflict(format!("scene `{id}` is still uploading"))),
        UploadStart::New => {}
    }
    let store = state.store.clone();
    let (write_id, bytes) = (id.clone(), canonical.clone().into_bytes());
    let written = blocking(move || store.put_scene(&write_id, &bytes).map_err(ApiError::from)).await;
    match written {
        Ok(()) => {
            state.finish_upload(&id, scene.clone());
            tracing::info!(scene = %id, "scene stored");
            Ok(reply(StatusCode::CREATED))
        }
        Err(e) => {
            state.abort_upload(&id);
            Err(e)
        }
    }
}

pub async fn get_scene(State(state): Shared, Path(id): Path<String>) -> Result<Response, ApiError> {
    match state.scene_slot(&id) {
        Some(SceneSlot::Ready(_)) => {
            let store = state.store.clone();
            let bytes = blocking(move || store.scene_bytes(&id).map_err(ApiError::from)).await?;
            Ok(json_bytes(StatusCode::OK, bytes))
        }
        Some(SceneSlot::Uploading) => Err(ApiError::conflict(format!("scene `{id}` is still uploading"))),
        None => Err(ApiError::not_found("scene", &id)),
    }
}

/// A region as an object or in the command-line grammar.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum RegionSpec {
    Text(String),
    Structured(DeploymentRegion),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanRequest {
    pub v: u32,
    pub scene_id: String,
    pub region: RegionSpec,
    #[serde(default)]
    pub config: PlanConfig,
    /// Overrides `config.planner.seed`.
    #[serde(default)]
    pub seed: Option<u64>,
}

pub async fn submit_plan(State(state): Shared, body: Bytes) -> Result<Response, ApiError> {
    let req: PlanRequest = parse_body(&body)?;
    check_version(req.v)?;
    let mut config = req.config;
    if let Some(seed) = req.seed {
        config.planner.seed = seed;
    }
    config.validate()?;
    let region = match req.region {
        RegionSpec::Text(s) => DeploymentRegion::from_str(&s)?,
        RegionSpec::Structured(r) => r,
    };
    let scene = match state.scene_slot(&req.scene_id) {
        Some(SceneSlot::Ready(scene)) => scene,
        Some(SceneSlot::Uploading) => return Err(ApiError::conflict(format!("scene `{}` is still uploading", req.scene_id))),
        None => return Err(ApiError::not_found("scene", &req.scene_id)),
    };
    region.resolve(&scene.bounds)?;
    let grid = GridSpec::new(scene.bounds, config.resolution_m)?;
    let weights = build_weight_map(&scene, &grid, &config.weights);
    if weights.is_all_zero() {
        return Err(radioplan_core::Error::ZeroWeights.into());
    }
    let capacity = state.config.workers + state.config.queue_depth;
    if state.jobs.active_count() >= capacity {
        return Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "busy", format!("{capacity} jobs already queued or running")));
    }

    let stored = StoredRequest { scene_id: req.scene_id.clone(), region, config };
    let request_bytes = serde_json::to_vec(&Versioned::new(&stored)).map_err(|e| ApiError::internal(e.to_string()))?;
    let id = state.next_job_id(&request_bytes);
    let dir = state.store.plan_dir(&id);
    let request_path = state.store.plan_file(&id, REQUEST_FILE);
    blocking(move || {
        std::fs::create_dir_all(&dir)?;
        radioplan_core::export::write_atomic(&request_path, &request_bytes).map_err(ApiError::from)
    })
    .await?;

    state.jobs.insert(Job { id: id.clone(), scene_id: stored.scene_id.clone(), state: JobState::Queued, progress: 0.0, error: None });
    tracing::info!(job = %id, scene = %stored.scene_id, "plan queued");
    let worker_state = state.clone();
    let job_id = id.clone();
    tokio::spawn(async move {
        let state = worker_state;
        let Ok(_permit) = state.workers.clone().acquire_owned().await else { return };
        state.jobs.transition(&job_id, JobState::Running, None);
        let runner = state.clone();
        let run_id = job_id.clone();
        let outcome = tokio::task::spawn_blocking(move || {
            execute(&runner.store, &runner.jobs, &run_id, &scene, &stored, &grid, &weights).map_err(|e| e.to_string())
        })
        .await
        .unwrap_or_else(|e| Err(e.to_string()));
        match outcome {
            Ok(()) => {
                state.jobs.transition(&job_id, JobState::Done, None);
                tracing::info!(job = %job_id, "plan done");
            }
            Err(message) => {
                tracing::warn!(job = %job_id, %message, "plan failed");
                state.jobs.transition(&job_id, JobState::Failed, Some(message));
            }
        }
    });

    let body = json!({ "v": API_VERSION, "id": id, "status": format!("/plans/{id}") });
    Ok((StatusCode::ACCEPTED, Json(body)).into_response())
}

fn find_job(state: &AppState, id: &str) -> Result<Job, ApiError> {
    if !is_valid_id(id) {
        return Err(ApiError::not_found("plan", id));
    }
    state.jobs.get(id).ok_or_else(|| ApiError::not_found("plan", id))
}

fn done_job(state: &AppState, id: &str) -> Result<Job, ApiError> {
    let job = find_job(state, id)?;
    match job.state {
        JobState::Done => Ok(job),
        JobState::Failed => Err(ApiError::conflict(format!(
            "plan `{id}` failed: {}",
            job.error.as_deref().unwrap_or("unknown error")
        ))),
        _ => Err(ApiError::conflict(format!("plan `{id}` has not finished"))),
    }
}

pub async fn plan_status(State(state): Shared, Path(id): Path<String>) -> Result<Json<serde_json::Value>, ApiError> {
    Ok(Json(status_body(&find_job(&state, &id)?)))
}

pub async fn plan_result(State(state): Shared, Path(id): Path<String>) -> Result<Response, ApiError> {
    done_job(&state, &id)?;
    let path = state.store.plan_file(&id, RESULT_FILE);
    let bytes = blocking(move || std::fs::read(path).map_err(ApiError::from)).await?;
    Ok(json_bytes(StatusCode::OK, bytes))
}

/// Which stored radio map to read.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapChoice {
    /// Map at the best position found.
    #[default]
    Best,
    /// Map at the first starting point (the projected machine center).
    Initial,
}

impl MapChoice {
    fn file(self) -> &'static str {
        match self {
            MapChoice::Best => MAP_FILE,
            MapChoice::Initial => INITIAL_MAP_FILE,
        }
    }
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> Result<T, ApiError> {
    q.map(|Query(t)| t).map_err(|e| ApiError::bad_request(e.body_text()))
}

async fn load_map(state: &AppState, id: &str, choice: MapChoice) -> Result<RadioMap, ApiError> {
    done_job(state, id)?;
    let path = state.store.plan_file(id, choice.file());
    blocking(move || read_radio_map(&path).map_err(ApiError::from)).await
}

#[derive(Debug, Deserialize)]
pub struct SliceQuery {
    pub z: f64,
    #[serde(default)]
    pub map: MapChoice,
}

pub async fn plan_slice(
    State(state): Shared,
    Path(id): Path<String>,
    q: Result<Query<SliceQuery>, QueryRejection>,
) -> Result<Json<Versioned<radioplan_core::Slice>>, ApiError> {
    let q = query(q)?;
    let map = load_map(&state, &id, q.map).await?;
    Ok(Json(Versioned::new(horizontal_slice(&map, q.z)?)))
}

#[derive(Debug, Deserialize)]
pub struct CdfQuery {
    #[serde(default = "default_true")]
    pub masked: bool,
}

fn default_true() -> bool {
    true
}

pub async fn plan_cdf(
    State(state): Shared,
    Path(id): Path<String>,
    q: Result<Query<CdfQuery>, QueryRejection>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let q = query(q)?;
    let best = load_map(&state, &id, MapChoice::Best).await?;
    let initial = load_map(&state, &id, MapChoice::Initial).await?;
    let mask = if q.masked {
        let path = state.store.plan_file(&id, WEIGHTS_FILE);
        Some(blocking(move || read_weight_map(&path).map_err(ApiError::from)).await?)
    } else {
        None
    };
    let best_cdf = coverage_cdf(&best, mask.as_ref())?;
    let initial_cdf = coverage_cdf(&initial, mask.as_ref())?;
    Ok(Json(json!({
        "v": API_VERSION,
        "masked": q.masked,
        "best": best_cdf,
        "initial": initial_cdf,
        "median_dbm": { "best": cdf_quantile(&best_cdf, 0.5), "initial": cdf_quantile(&initial_cdf, 0.5) },
    })))
}

#[derive(Debug, Deserialize)]
pub struct MapQuery {
    #[serde(default)]
    pub map: MapChoice,
}

fn map_path(state: &AppState, id: &str, q: Result<Query<MapQuery>, QueryRejection>) -> Result<PathBuf, ApiError> {
    let q = query(q)?;
    done_job(state, id)?;
    Ok(state.store.plan_file(id, q.map.file()))
}

/// Raw `f32le` container; the grid is described by `/map/meta`.
pub async fn plan_map(
    State(state): Shared,
    Path(id): Path<String>,
    q: Result<Query<MapQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let path = map_path(&state, &id, q)?;
    let bytes = blocking(move || std::fs::read(path).map_err(ApiError::from)).await?;
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response())
}

pub async fn plan_map_meta(
    State(state): Shared,
    Path(id): Path<String>,
    q: Result<Query<MapQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let path = sidecar_path(&map_path(&state, &id, q)?);
    let bytes = blocking(move || std::fs::read(path).map_err(ApiError::from)).await?;
    Ok(json_bytes(StatusCode::OK, bytes))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverlayRequest {
    pub v: u32,
    pub plan_id: String,
    pub pose: CameraPose,
    pub intrinsics: Intrinsics,
    #[serde(default)]
    pub options: OverlayOptions,
    #[serde(default)]
    pub map: MapChoice,
}

pub async fn overlay(State(state): Shared, body: Bytes) -> Result<Json<Versioned<radioplan_core::Overlay>>, ApiError> {
    let req: OverlayRequest = parse_body(&body)?;
    check_version(req.v)?;
    let map = load_map(&state, &req.plan_id, req.map).await?;
    let overlay = blocking(move || project_radio_map(&map, &req.pose, &req.intrinsics, &req.options).map_err(ApiError::from)).await?;
    Ok(Json(Versioned::new(overlay)))
}
