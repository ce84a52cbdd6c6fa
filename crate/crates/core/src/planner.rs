//! Access-point placement: maximize weighted RSRP over a deployment region
//! with multi-start local ascent.
//!
//! Each instance runs a compass search: poll `±step` along every free axis
//! of the region, move to the best strictly improving neighbor, otherwise
//! halve the step. The objective is piecewise constant under voxel sampling,
//! so no gradient is formed.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Vec3};
use crate::radiomap::{build_compiled, utility_scaled, GridSpec, RadioMap, UtilityScale, WeightMap};
use crate::scene::{geometric_center, Scene};
use crate::tracer::{AntennaConfig, CompiledScene, TraceParams};

/// Where the access point may be placed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DeploymentRegion {
    FullSpace,
    Box { min: Vec3, max: Vec3 },
    /// Rectangle at a fixed height, e.g. a ceiling patch.
    HorizontalRect { z: f64, min: [f64; 2], max: [f64; 2] },
}

/// A region resolved against the scene bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct FeasibleRegion {
    pub bounds: Aabb,
    /// Axes the search may move along.
    pub free: [bool; 3],
}

impl DeploymentRegion {
    pub fn resolve(&self, scene_bounds: &Aabb) -> Result<FeasibleRegion> {
        let (region, free) = match self {
            DeploymentRegion::FullSpace => (*scene_bounds, [true; 3]),
            DeploymentRegion::Box { min, max } => (Aabb::new(*min, *max), [true; 3]),
            DeploymentRegion::HorizontalRect { z, min, max } => (
                Aabb::new(Vec3::new(min[0], min[1], *z), Vec3::new(max[0], max[1], *z)),
                [true, true, false],
            ),
        };
        if !(region.min.iter().chain(region.max.iter()).all(|c| c.is_finite())) {
            return Err(Error::DegenerateRegion("coordinates must be finite".into()));
        }
        if (0..3).any(|a| region.min[a] > region.max[a]) {
            return Err(Error::DegenerateRegion("min exceeds max".into()));
        }
        let bounds = region.intersect(scene_bounds).ok_or(Error::EmptyRegion)?;
        let free = [0, 1, 2].map(|a| free[a] && bounds.max[a] > bounds.min[a]);
        Ok(FeasibleRegion { bounds, free })
    }
}

impl FeasibleRegion {
    pub fn contains(&self, p: &Vec3) -> bool {
        self.bounds.contains(p)
    }

    /// Projects onto the region after rounding to whole millimetres; every
    /// position the planner evaluates passes through here.
    pub fn canonical(&self, p: &Vec3) -> Vec3 {
        self.bounds.clamp(&p.map(|c| (c * 1000.0).round() / 1000.0))
    }

    fn free_axes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..3).filter(|&a| self.free[a])
    }
}

/// Command-line form: `full`, `box:x0,y0,z0,x1,y1,z1`, or
/// `ceiling:z=H:x0,y0,x1,y1`.
impl FromStr for DeploymentRegion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Parse(format!("region `{s}`: {msg}"));
        let numbers = |list: &str, n: usize| -> Result<Vec<f64>> {
            let v: Vec<f64> = list
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("expected comma-separated numbers"))?;
            if v.len() != n {
                return Err(bad(&format!("expected {n} numbers")));
            }
            Ok(v)
        };
        let mut parts = s.split(':');
        match parts.next() {
            Some("full") if parts.next().is_none() => Ok(DeploymentRegion::FullSpace),
            Some("box") => {
                let v = numbers(parts.next().ok_or_else(|| bad("missing corners"))?, 6)?;
                Ok(DeploymentRegion::Box { min: Vec3::new(v[0], v[1], v[2]), max: Vec3::new(v[3], v[4], v[5]) })
            }
            Some("ceiling") => {
                let z = parts
                    .next()
                    .and_then(|p| p.strip_prefix("z="))
                    .ok_or_else(|| bad("expected z=H"))?
                    .parse::<f64>()
                    .map_err(|_| bad("bad height"))?;
                let v = numbers(parts.next().ok_or_else(|| bad("missing rectangle"))?, 4)?;
                if parts.next().is_some() {
                    return Err(bad("trailing fields"));
                }
                Ok(DeploymentRegion::HorizontalRect { z, min: [v[0], v[1]], max: [v[2], v[3]] })
            }
            _ => Err(bad("expected full, box:... or ceiling:z=H:...")),
        }
    }
}

impl fmt::Display for DeploymentRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeploymentRegion::FullSpace => write!(f, "full"),
            DeploymentRegion::Box { min, max } => {
                write!(f, "box:{},{},{},{},{},{}", min.x, min.y, min.z, max.x, max.y, max.z)
            }
            DeploymentRegion::HorizontalRect { z, min, max } => {
                write!(f, "ceiling:z={z}:{},{},{},{}", min[0], min[1], max[0], max[1])
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerParams {
    pub n_instances: usize,
    /// Standard deviation of the initial offsets around the machine center.
    pub init_spread_m: f64,
    pub step_init_m: f64,
    pub step_min_m: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self { n_instances: 8, init_spread_m: 2.0, step_init_m: 2.0, step_min_m: 0.1, max_iters: 60, seed: 0 }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_instances == 0 {
            return Err(Error::validation("planner.n_instances", "must be at least 1"));
        }
        if !(self.init_spread_m.is_finite() && self.init_spread_m >= 0.0) {
            return Err(Error::validation("planner.init_spread_m", "must be non-negative"));
        }
        if !(self.step_min_m > 0.0 && self.step_min_m < self.step_init_m && self.step_init_m.is_finite()) {
            return Err(Error::validation("planner.step_min_m", "must satisfy 0 < step_min_m < step_init_m"));
        }
        if self.max_iters == 0 {
            return Err(Error::validation("planner.max_iters", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub init_position: Vec3,
    pub final_position: Vec3,
    pub final_utility: f64,
    /// Polling rounds performed.
    pub iterations: usize,
    /// Utility at the start and after every round.
    pub utility_trace: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanStats {
    /// Objective calls, including cache hits.
    pub evaluations: usize,
    pub map_builds: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    /// Geometric center of the machines (bounds center when there are none).
    pub center: Vec3,
    pub best_position: Vec3,
    pub best_utility: f64,
    pub best_instance: usize,
    pub instances: Vec<InstanceRecord>,
    pub stats: PlanStats,
    /// Stored separately as a radio-map container.
    #[serde(skip)]
    pub radio_map: Option<RadioMap>,
}

/// `n_instances` starting points: the projection of `center` first, then
/// projections of Gaussian perturbations of it.
pub fn sample_initial_positions(center: &Vec3, region: &DeploymentRegion, scene_bounds: &Aabb, params: &PlannerParams) -> Result<Vec<Vec3>> {
    let feasible = region.resolve(scene_bounds)?;
    sample_feasible(center, &feasible, params)
}

fn sample_feasible(center: &Vec3, region: &FeasibleRegion, params: &PlannerParams) -> Result<Vec<Vec3>> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let normal = Normal::new(0.0, params.init_spread_m).map_err(|e| Error::validation("planner.init_spread_m", e.to_string()))?;
    let mut out = vec![region.canonical(center)];
    while out.len() < params.n_instances {
        let mut p = *center;
        for a in region.free_axes() {
            p[a] += normal.sample(&mut rng);
        }
        out.push(region.canonical(&p));
    }
    Ok(out)
}

const POLL_ORDER: [(usize, f64); 6] = [(0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0), (2, 1.0), (2, -1.0)];

/// Compass search from `init`. Neighbors are polled in the fixed order
/// +x, -x, +y, -y, +z, -z; the first best strict improvement wins.
pub fn local_search<F>(init: &Vec3, region: &FeasibleRegion, mut objective: F, params: &PlannerParams) -> Result<InstanceRecord>
where
    F: FnMut(&Vec3) -> Result<f64>,
{
    params.validate()?;
    if !region.contains(init) {
        return Err(Error::validation("init", "initial position lies outside the deployment region"));
    }
    let mut pos = *init;
    let mut current = objective(&pos)?;
    let mut trace = vec![current];
    let mut step = params.step_init_m;
    let mut iterations = 0;
    while iterations < params.max_iters && step >= params.step_min_m {
        iterations += 1;
        let mut best: Option<(Vec3, f64)> = None;
        for &(axis, sign) in POLL_ORDER.iter().filter(|(a, _)| region.free[*a]) {
            let mut cand = pos;
            cand[axis] += sign * step;
            let cand = region.canonical(&cand);
            if cand == pos {
                continue;
            }
            let u = objective(&cand)?;
            if u > current && best.is_none_or(|(_, b)| u > b) {
                best = Some((cand, u));
            }
        }
        match best {
            Some((p, u)) => {
                pos = p;
                current = u;
            }
            None => step *= 0.5,
        }
        trace.push(current);
    }
    Ok(InstanceRecord { init_position: *init, final_position: pos, final_utility: current, iterations, utility_trace: trace })
}

/// Optional knobs for [`plan_with`].
#[derive(Clone, Copy, Default)]
pub struct PlanOptions<'a> {
    pub scale: UtilityScale,
    /// Called with the completed fraction of instances. Calls may arrive
    /// from several threads.
    pub progress: Option<&'a (dyn Fn(f64) + Sync)>,
}

pub fn plan(
    scene: &Scene,
    region: &DeploymentRegion,
    weights: &WeightMap,
    grid: &GridSpec,
    antenna_template: &AntennaConfig,
    trace: &TraceParams,
    params: &PlannerParams,
) -> Result<PlanResult> {
    plan_with(scene, region, weights, grid, antenna_template, trace, params, PlanOptions::default())
}

#[allow(clippy::too_many_arguments)]
pub fn plan_with(
    scene: &Scene,
    region: &DeploymentRegion,
    weights: &WeightMap,
    grid: &GridSpec,
    antenna_template: &AntennaConfig,
    trace: &TraceParams,
    params: &PlannerParams,
    options: PlanOptions<'_>,
) -> Result<PlanResult> {
    params.validate()?;
    trace.validate()?;
    antenna_template.validate()?;
    if weights.grid != *grid {
        return Err(Error::GridMismatch);
    }
    if weights.is_all_zero() {
        return Err(Error::ZeroWeights);
    }
    let feasible = region.resolve(&scene.bounds)?;
    let compiled = CompiledScene::new(scene)?;
    let center = match geometric_center(scene) {
        Ok(c) => c,
        Err(Error::EmptyMachines) => scene.bounds.center(),
        Err(e) => return Err(e),
    };
    let inits = sample_feasible(&center, &feasible, params)?;

    let cache: Mutex<HashMap<[i64; 3], f64>> = Mutex::new(HashMap::new());
    let evaluations = AtomicUsize::new(0);
    let builds = AtomicUsize::new(0);
    let evaluate = |p: &Vec3| -> Result<f64> {
        evaluations.fetch_add(1, Ordering::Relaxed);
        let key = p.map(|c| (c * 1000.0).round() as i64).into();
        if let Some(u) = cache.lock().unwrap().get(&key) {
            return Ok(*u);
        }
        builds.fetch_add(1, Ordering::Relaxed);
        let map = build_compiled(&compiled, &antenna_template.at(*p), grid, trace)?;
        let u = utility_scaled(&map, weights, options.scale)?;
        cache.lock().unwrap().insert(key, u);
        Ok(u)
    };

    let done = AtomicUsize::new(0);
    let instances = inits
        .par_iter()
        .map(|init| {
            let record = local_search(init, &feasible, &evaluate, params);
            let finished = done.fetch_add(1, Ordering::SeqCst) + 1;
            if let Some(report) = options.progress {
                report(finished as f64 / inits.len() as f64);
            }
            record
        })
        .collect::<Result<Vec<_>>>()?;

    let best_instance = instances
        .iter()
        .enumerate()
        .fold(0, |best, (i, r)| if r.final_utility > instances[best].final_utility { i } else { best });
    let best = &instances[best_instance];
    let radio_map = build_compiled(&compiled, &antenna_template.at(best.final_position), grid, trace)?;
    builds.fetch_add(1, Ordering::Relaxed);

    Ok(PlanResult {
        center,
        best_position: best.final_position,
        best_utility: best.final_utility,
        best_instance,
        stats: PlanStats { evaluations: evaluations.into_inner(), map_builds: builds.into_inner() },
        instances,
        radio_map: Some(radio_map),
    })
}
