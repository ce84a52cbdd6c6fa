//! Radio-network planning for indoor industrial spaces.
//!
//! A [`Scene`] of obstacles is ray traced into voxel RSRP maps
//! ([`radiomap`]); the [`planner`] searches a user-constrained deployment
//! region for the access-point position maximizing weighted RSRP; and
//! [`projection`] maps radio-map voxels into camera frames for AR overlays.

pub mod config;
pub mod error;
pub mod export;
pub mod geometry;
pub mod planner;
pub mod projection;
pub mod radiomap;
pub mod scene;
pub mod tracer;

pub use config::PlanConfig;
pub use error::{Error, Result};
pub use geometry::{Aabb, Vec3};
pub use planner::{local_search, plan, plan_with, sample_initial_positions, DeploymentRegion, PlanResult, PlannerParams};
pub use projection::{project_point, project_radio_map, CameraPose, Intrinsics, Overlay};
pub use radiomap::{
    build_radio_map, build_weight_map, coverage_cdf, horizontal_slice, utility, GridSpec, RadioMap, Slice,
    UtilityScale, WeightMap, WeightPolicy,
};
pub use scene::{geometric_center, load_scene, object_position_rmse, Scene};
pub use tracer::{path_power_dbm, received_power_dbm, trace_paths, AntennaConfig, PropagationPath, TraceParams};
