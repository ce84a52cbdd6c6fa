//! Received power at 3D points by shooting-and-bouncing rays.
//!
//! The propagation model is free-space path loss plus scalar per-interaction
//! losses; paths are combined by power sum (no phase).

pub(crate) mod engine;

use std::collections::BTreeSet;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scene::Scene;

pub use engine::{fibonacci_direction, CompiledScene, MAX_BOUNCES};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AntennaConfig {
    pub position: Vec3,
    pub tx_power_dbm: f64,
    /// Omni gain, dBi.
    pub gain_dbi: f64,
    pub frequency_hz: f64,
}

impl Default for AntennaConfig {
    fn default() -> Self {
        Self { position: Vec3::zeros(), tx_power_dbm: 20.0, gain_dbi: 4.7, frequency_hz: 3.75e9 }
    }
}

impl AntennaConfig {
    pub fn at(&self, position: Vec3) -> Self {
        Self { position, ..self.clone() }
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.frequency_hz
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frequency_hz.is_finite() && self.frequency_hz > 0.0) {
            return Err(Error::validation("antenna.frequency_hz", "must be positive"));
        }
        if !(self.tx_power_dbm.is_finite() && self.gain_dbi.is_finite()) {
            return Err(Error::validation("antenna", "power and gain must be finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceParams {
    /// Launch directions, spread uniformly over the sphere.
    pub ray_count: usize,
    pub max_bounces: u32,
    pub max_transmissions: u32,
    pub rx_capture_radius_m: f64,
    pub min_power_dbm: f64,
}

impl Default for TraceParams {
    fn default() -> Self {
        Self { ray_count: 20_000, max_bounces: 3, max_transmissions: 2, rx_capture_radius_m: 0.25, min_power_dbm: -150.0 }
    }
}

impl TraceParams {
    pub fn validate(&self) -> Result<()> {
        if self.ray_count == 0 {
            return Err(Error::validation("trace.ray_count", "must be at least 1"));
        }
        if self.max_bounces > MAX_BOUNCES {
            return Err(Error::validation("trace.max_bounces", format!("at most {MAX_BOUNCES} supported")));
        }
        if !(self.rx_capture_radius_m.is_finite() && self.rx_capture_radius_m > 0.0) {
            return Err(Error::validation("trace.rx_capture_radius_m", "must be positive"));
        }
        if !self.min_power_dbm.is_finite() {
            return Err(Error::validation("trace.min_power_dbm", "must be finite"));
        }
        Ok(())
    }
}

/// One interaction with a surface along a path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    /// Obstacle id; box faces carry a `/±axis` suffix for reflections.
    pub surface: String,
    pub loss_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagationPath {
    /// From the antenna to the receive point.
    pub vertices: Vec<Vec3>,
    pub bounce_count: usize,
    pub reflection_events: Vec<Interaction>,
    pub transmission_events: Vec<Interaction>,
    pub total_length_m: f64,
}

/// Free-space path loss in dB at distance `d_m`.
pub fn fspl_db(d_m: f64, wavelength_m: f64) -> f64 {
    20.0 * (4.0 * PI * d_m / wavelength_m).log10()
}

pub fn path_power_dbm(path: &PropagationPath, antenna: &AntennaConfig) -> Result<f64> {
    if !(path.total_length_m.is_finite() && path.total_length_m > 0.0) {
        return Err(Error::ZeroLengthPath);
    }
    let losses: f64 = path
        .reflection_events
        .iter()
        .chain(&path.transmission_events)
        .map(|e| e.loss_db)
        .sum();
    Ok(antenna.tx_power_dbm + antenna.gain_dbi - fspl_db(path.total_length_m, antenna.wavelength_m()) - losses)
}

/// Power-sum of all paths, never below `floor_dbm`.
pub fn received_power_dbm(paths: &[PropagationPath], antenna: &AntennaConfig, floor_dbm: f64) -> f64 {
    let linear_mw: f64 = paths
        .iter()
        .filter_map(|p| path_power_dbm(p, antenna).ok())
        .map(|dbm| 10f64.powf(dbm / 10.0))
        .sum();
    if linear_mw > 0.0 {
        (10.0 * linear_mw.log10()).max(floor_dbm)
    } else {
        floor_dbm
    }
}

/// All propagation paths from the antenna to `rx`, ordered by bounce count
/// and then by reflection sequence.
pub fn trace_paths(scene: &Scene, antenna: &AntennaConfig, rx: &Vec3, params: &TraceParams) -> Result<Vec<PropagationPath>> {
    params.validate()?;
    let compiled = CompiledScene::new(scene)?;
    Ok(trace_compiled(&compiled, antenna, rx, params))
}

pub(crate) fn trace_compiled(
    compiled: &CompiledScene,
    antenna: &AntennaConfig,
    rx: &Vec3,
    params: &TraceParams,
) -> Vec<PropagationPath> {
    let tx = antenna.position;
    let radius = params.rx_capture_radius_m;
    let found = compiled.launch(&tx, params, BTreeSet::new, |set, a, b, key| {
        if crate::geometry::segment_point_distance(a, b, rx) <= radius {
            set.insert(key);
        }
    });
    let mut keys: Vec<_> = found.into_iter().flatten().collect::<BTreeSet<_>>().into_iter().collect();
    keys.sort_by_key(|&k| (engine::bounce_count(k), k));
    std::iter::once(0)
        .chain(keys)
        .filter_map(|k| compiled.refine(&tx, rx, k, params.max_transmissions))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::load_scene;
    use approx::assert_abs_diff_eq;

    fn antenna_with_wavelength(lambda: f64) -> AntennaConfig {
        AntennaConfig { frequency_hz: SPEED_OF_LIGHT / lambda, ..Default::default() }
    }

    fn straight(d: f64) -> PropagationPath {
        PropagationPath {
            vertices: vec![Vec3::zeros(), Vec3::new(d, 0.0, 0.0)],
            bounce_count: 0,
            reflection_events: vec![],
            transmission_events: vec![],
            total_length_m: d,
        }
    }

    #[test]
    fn path_power_examples() {
        let ant = antenna_with_wavelength(0.08);
        // 24.7 - 20*log10(4*pi/0.08) = 24.7 - 43.9224...
        let expected = 24.7 - 20.0 * (4.0 * PI / 0.08f64).log10();
        let p1 = path_power_dbm(&straight(1.0), &ant).unwrap();
        assert_abs_diff_eq!(p1, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(p1, -19.2224, epsilon = 1e-4);
        let p2 = path_power_dbm(&straight(2.0), &ant).unwrap();
        assert_abs_diff_eq!(p1 - p2, 20.0 * 2f64.log10(), epsilon = 1e-12);

        let mut bounced = straight(1.0);
        bounced.reflection_events.push(Interaction { surface: "w".into(), loss_db: 6.0 });
        assert_abs_diff_eq!(p1 - path_power_dbm(&bounced, &ant).unwrap(), 6.0, epsilon = 1e-12);

        assert!(matches!(path_power_dbm(&straight(0.0), &ant), Err(Error::ZeroLengthPath)));
    }

    #[test]
    fn received_power_examples() {
        let ant = antenna_with_wavelength(0.08);
        // A path at exactly -50 dBm: solve for its length.
        let d = 0.08 / (4.0 * PI) * 10f64.powf((24.7 + 50.0) / 20.0);
        let p = straight(d);
        assert_abs_diff_eq!(received_power_dbm(std::slice::from_ref(&p), &ant, -150.0), -50.0, epsilon = 1e-9);
        let two = received_power_dbm(&[p.clone(), p], &ant, -150.0);
        assert_abs_diff_eq!(two, 10.0 * (2e-5f64).log10(), epsilon = 1e-9);
        assert_abs_diff_eq!(two, -46.99, epsilon = 0.005);
        assert_eq!(received_power_dbm(&[], &ant, -150.0), -150.0);
    }

    #[test]
    fn empty_scene_yields_line_of_sight_only() {
        let scene = load_scene(r#"{"bounds": {"x": [0, 10], "y": [0, 10]}, "boundary": {"enabled": false}}"#).unwrap();
        let ant = AntennaConfig { position: Vec3::new(1.0, 2.0, 1.0), ..Default::default() };
        let params = TraceParams { ray_count: 2000, ..Default::default() };
        let paths = trace_paths(&scene, &ant, &Vec3::new(4.0, 6.0, 1.0), &params).unwrap();
        assert_eq!(paths.len(), 1);
        assert_abs_diff_eq!(paths[0].total_length_m, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn metal_wall_blocks_without_transmissions() {
        let scene = load_scene(
            r#"{"bounds": {"x": [0, 10], "y": [0, 10], "z": [0, 3]}, "boundary": {"enabled": false},
                "obstacles": [{"id": "wall", "class_label": "wall", "material": "metal",
                    "shape": {"plane": {"corners": [[5,0,0],[5,10,0],[5,10,3],[5,0,3]]}}}]}"#,
        )
        .unwrap();
        let ant = AntennaConfig { position: Vec3::new(2.0, 5.0, 1.5), ..Default::default() };
        let rx = Vec3::new(8.0, 5.0, 1.5);
        let blocked = TraceParams { ray_count: 2000, max_bounces: 0, max_transmissions: 0, ..Default::default() };
        assert!(trace_paths(&scene, &ant, &rx, &blocked).unwrap().is_empty());

        let through = TraceParams { max_transmissions: 1, ..blocked };
        let paths = trace_paths(&scene, &ant, &rx, &through).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].transmission_events, vec![Interaction { surface: "wall".into(), loss_db: 30.0 }]);
    }

    #[test]
    fn floor_bounce_matches_image_source() {
        let scene = load_scene(
            r#"{"bounds": {"x": [-50, 50], "y": [-50, 50], "z": [0, 10]}, "boundary": {"enabled": false},
                "obstacles": [{"id": "floor", "class_label": "floor", "material": "concrete",
                    "shape": {"plane": {"corners": [[-50,-50,0],[50,-50,0],[50,50,0],[-50,50,0]]}}}]}"#,
        )
        .unwrap();
        let ant = AntennaConfig { position: Vec3::new(1.0, 1.0, 1.0), ..Default::default() };
        let params = TraceParams { max_bounces: 1, ..Default::default() };
        let paths = trace_paths(&scene, &ant, &Vec3::new(3.0, 1.0, 1.0), &params).unwrap();
        assert_eq!(paths.len(), 2);
        assert_abs_diff_eq!(paths[0].total_length_m, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(paths[1].total_length_m, 8f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(paths[1].vertices[1], Vec3::new(2.0, 1.0, 0.0), epsilon = 1e-12);
        assert_eq!(paths[1].reflection_events[0].loss_db, 6.0);
    }

    #[test]
    fn params_are_validated() {
        let scene = load_scene(r#"{"bounds": {"x": [0, 1], "y": [0, 1]}}"#).unwrap();
        let ant = AntennaConfig::default();
        for bad in [
            TraceParams { ray_count: 0, ..Default::default() },
            TraceParams { rx_capture_radius_m: 0.0, ..Default::default() },
            TraceParams { max_bounces: MAX_BOUNCES + 1, ..Default::default() },
        ] {
            assert!(trace_paths(&scene, &ant, &Vec3::repeat(0.5), &bad).is_err());
        }
    }
}
