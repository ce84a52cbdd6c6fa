//! Shared inputs for the benchmarks.

use radioplan_core::{load_scene, GridSpec, PlanConfig, Scene, TraceParams, Vec3};

pub const FACTORY: &str = include_str!("../../../docs/scenes/factory.json");

/// The bundled factory floor with a trace budget light enough to iterate on.
pub struct Fixture {
    pub scene: Scene,
    pub config: PlanConfig,
    pub grid: GridSpec,
    pub antenna: Vec3,
}

impl Fixture {
    pub fn factory(resolution_m: f64, trace: TraceParams) -> Self {
        let scene = load_scene(FACTORY).expect("bundled scene is valid");
        let config = PlanConfig { resolution_m, trace, ..PlanConfig::default() };
        let grid = GridSpec::new(scene.bounds, resolution_m).expect("bundled scene has a grid");
        Self { scene, config, grid, antenna: Vec3::new(10.0, 8.0, 4.0) }
    }

    pub fn light() -> Self {
        Self::factory(1.0, TraceParams { ray_count: 2_000, max_bounces: 2, max_transmissions: 1, ..TraceParams::default() })
    }
}
