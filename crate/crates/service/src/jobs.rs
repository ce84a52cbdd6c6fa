//! Planning jobs: the in-memory job table and the blocking work each job
//! performs.

use std::collections::BTreeMap;
use std::sync::Mutex;

use radioplan_core::export::{sidecar_path, write_atomic, write_radio_map, write_weight_map};
use radioplan_core::planner::{plan_with, PlanOptions};
use radioplan_core::{build_radio_map, DeploymentRegion, GridSpec, PlanConfig, Scene, WeightMap};
use serde::{Deserialize, Serialize};

use crate::store::{Store, INITIAL_MAP_FILE, MAP_FILE, RESULT_FILE, WEIGHTS_FILE};
use crate::{Versioned, API_VERSION};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    pub fn is_active(self) -> bool {
        matches!(self, JobState::Queued | JobState::Running)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub scene_id: String,
    pub state: JobState,
    /// Completed fraction; never decreases.
    pub progress: f64,
    pub error: Option<String>,
}

/// Request as stored next to the job's artifacts.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StoredRequest {
    pub scene_id: String,
    pub region: DeploymentRegion,
    pub config: PlanConfig,
}

#[derive(Default)]
pub struct JobTable {
    jobs: Mutex<BTreeMap<String, Job>>,
}

impl JobTable {
    pub fn get(&self, id: &str) -> Option<Job> {
        self.jobs.lock().unwrap().get(id).cloned()
    }

    pub fn insert(&self, job: Job) {
        self.jobs.lock().unwrap().insert(job.id.clone(), job);
    }

    pub fn active_count(&self) -> usize {
        self.jobs.lock().unwrap().values().filter(|j| j.state.is_active()).count()
    }

    /// Moves a job forward. Backward transitions are ignored.
    pub fn transition(&self, id: &str, state: JobState, error: Option<String>) {
        let mut jobs = self.jobs.lock().unwrap();
        let Some(job) = jobs.get_mut(id) else { return };
        let allowed = matches!(
            (job.state, state),
            (JobState::Queued, JobState::Running) | (JobState::Running, JobState::Done | JobState::Failed) | (JobState::Queued, JobState::Failed)
        );
        if allowed {
            job.state = state;
            job.error = error;
            if state == JobState::Done {
                job.progress = 1.0;
            }
        }
    }

    pub fn report_progress(&self, id: &str, fraction: f64) {
        if let Some(job) = self.jobs.lock().unwrap().get_mut(id) {
            job.progress = job.progress.max(fraction.clamp(0.0, 1.0));
        }
    }
}

/// Share of the progress bar given to the search; the rest covers writing
/// artifacts.
const SEARCH_SHARE: f64 = 0.9;

/// Runs the planner and persists every artifact. `result.json` is written
/// last and marks the job complete on disk.
pub fn execute(
    store: &Store,
    jobs: &JobTable,
    id: &str,
    scene: &Scene,
    request: &StoredRequest,
    grid: &GridSpec,
    weights: &WeightMap,
) -> radioplan_core::Result<()> {
    let cfg = &request.config;
    let progress = |f: f64| jobs.report_progress(id, f * SEARCH_SHARE);
    let options = PlanOptions { scale: cfg.utility_scale, progress: Some(&progress) };
    let result = plan_with(scene, &request.region, weights, grid, &cfg.antenna, &cfg.trace, &cfg.planner, options)?;

    let first = result.instances[0].init_position;
    let initial = build_radio_map(scene, &cfg.antenna.at(first), grid, &cfg.trace)?;
    let best = result.radio_map.as_ref().expect("plan returns the best map");
    write_radio_map(best, &store.plan_file(id, MAP_FILE))?;
    write_radio_map(&initial, &store.plan_file(id, INITIAL_MAP_FILE))?;
    write_weight_map(weights, &store.plan_file(id, WEIGHTS_FILE))?;
    let body = serde_json::to_vec(&Versioned::new(&result))?;
    write_atomic(&store.plan_file(id, RESULT_FILE), &body)
}

/// Rebuilds the job table from disk: plans with a result are done, the rest
/// were interrupted.
pub fn recover(store: &Store, jobs: &JobTable) -> std::io::Result<()> {
    for id in store.plan_ids()? {
        let request = std::fs::read(store.plan_file(&id, crate::store::REQUEST_FILE))
            .ok()
            .and_then(|b| serde_json::from_slice::<StoredRequest>(&b).ok());
        let scene_id = request.map(|r| r.scene_id).unwrap_or_default();
        let done = store.plan_file(&id, RESULT_FILE).is_file() && sidecar_path(&store.plan_file(&id, MAP_FILE)).is_file();
        let job = if done {
            Job { id: id.clone(), scene_id, state: JobState::Done, progress: 1.0, error: None }
        } else {
            Job {
                id: id.clone(),
                scene_id,
                state: JobState::Failed,
                progress: 0.0,
                error: Some("interrupted before completion".into()),
            }
        };
        jobs.insert(job);
    }
    Ok(())
}

pub fn status_body(job: &Job) -> serde_json::Value {
    serde_json::json!({
        "v": API_VERSION,
        "id": job.id,
        "scene_id": job.scene_id,
        "state": job.state,
        "progress": job.progress,
        "result": (job.state == JobState::Done).then(|| format!("/plans/{}/result", job.id)),
        "error": job.error,
    })
}
