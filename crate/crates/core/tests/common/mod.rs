#![allow(dead_code)]

use std::f64::consts::PI;

use radioplan_core::scene::{load_scene, Scene};
use radioplan_core::tracer::SPEED_OF_LIGHT;
use radioplan_core::{AntennaConfig, GridSpec, RadioMap, Vec3, WeightMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fixture(name: &str) -> Scene {
    let path = format!("{}/tests/fixtures/{name}.json", env!("CARGO_MANIFEST_DIR"));
    Scene::from_path(path).unwrap()
}

pub fn free_space(extent: f64) -> Scene {
    load_scene(&format!(
        r#"{{"bounds": {{"x": [{lo}, {extent}], "y": [{lo}, {extent}], "z": [{lo}, {extent}]}},
            "boundary": {{"enabled": false}}}}"#,
        lo = -extent
    ))
    .unwrap()
}

/// Reference FSPL, written out independently of the library.
pub fn reference_fspl(d: f64, freq_hz: f64) -> f64 {
    let lambda = SPEED_OF_LIGHT / freq_hz;
    20.0 * (4.0 * PI * d / lambda).log10()
}

/// A single finite plane with its own material, plus an antenna and a
/// receive point, all kept at desk scale.
pub struct PlaneCase {
    pub corners: [Vec3; 4],
    pub reflection_loss_db: f64,
    pub transmission_loss_db: f64,
    pub tx: Vec3,
    pub rx: Vec3,
}

impl PlaneCase {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        loop {
            let center = Vec3::new(rng.random_range(3.0..7.0), rng.random_range(3.0..7.0), rng.random_range(1.0..3.0));
            let normal = random_unit(rng);
            let helper = if normal.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
            let u = normal.cross(&helper).normalize() * rng.random_range(1.0..4.0);
            let v = normal.cross(&u).normalize() * rng.random_range(1.0..4.0);
            let corners = [center - u - v, center + u - v, center + u + v, center - u + v];
            let point = |rng: &mut ChaCha8Rng| {
                Vec3::new(rng.random_range(2.0..8.0), rng.random_range(2.0..8.0), rng.random_range(0.5..3.5))
            };
            let tx = point(rng);
            let rx = point(rng);
            let clear = |p: &Vec3| (p - center).dot(&normal).abs() > 0.05;
            if clear(&tx) && clear(&rx) && (tx - rx).norm() > 0.5 {
                return Self {
                    corners,
                    reflection_loss_db: rng.random_range(0.0..10.0),
                    transmission_loss_db: rng.random_range(0.0..30.0),
                    tx,
                    rx,
                };
            }
        }
    }

    pub fn scene(&self) -> Scene {
        let c = |p: &Vec3| format!("[{}, {}, {}]", p.x, p.y, p.z);
        load_scene(&format!(
            r#"{{"bounds": {{"x": [-20, 30], "y": [-20, 30], "z": [-20, 30]}}, "boundary": {{"enabled": false}},
                "materials": {{"m": {{"reflection_loss_db": {}, "transmission_loss_db": {}}}}},
                "obstacles": [{{"id": "plane", "class_label": "panel", "material": "m",
                    "shape": {{"plane": {{"corners": [{}, {}, {}, {}]}}}}}}]}}"#,
            self.reflection_loss_db,
            self.transmission_loss_db,
            c(&self.corners[0]),
            c(&self.corners[1]),
            c(&self.corners[2]),
            c(&self.corners[3]),
        ))
        .unwrap()
    }

    fn normal(&self) -> Vec3 {
        (self.corners[1] - self.corners[0]).cross(&(self.corners[3] - self.corners[0])).normalize()
    }

    fn inside(&self, p: &Vec3) -> bool {
        let u = self.corners[1] - self.corners[0];
        let v = self.corners[3] - self.corners[0];
        let s = (p - self.corners[0]).dot(&u) / u.norm_squared();
        let t = (p - self.corners[0]).dot(&v) / v.norm_squared();
        (0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&t)
    }

    /// Image-source enumeration: `(length, total loss dB)` for the direct
    /// path and the single specular reflection, when they exist within the
    /// given budgets.
    pub fn image_source_paths(&self, max_bounces: u32, max_transmissions: u32) -> Vec<(f64, f64)> {
        let n = self.normal();
        let o = self.corners[0];
        let side = |p: &Vec3| (p - o).dot(&n);
        let mut out = Vec::new();

        let (dt, dr) = (side(&self.tx), side(&self.rx));
        let crosses = dt * dr < 0.0 && self.inside(&(self.tx + (self.rx - self.tx) * (dt / (dt - dr))));
        if !crosses {
            out.push(((self.rx - self.tx).norm(), 0.0));
        } else if max_transmissions >= 1 {
            out.push(((self.rx - self.tx).norm(), self.transmission_loss_db));
        }

        if max_bounces >= 1 && dt * dr > 0.0 {
            let image = self.tx - n * (2.0 * dt);
            let di = side(&image);
            let hit = self.rx + (image - self.rx) * (dr / (dr - di));
            if self.inside(&hit) {
                out.push(((self.rx - image).norm(), self.reflection_loss_db));
            }
        }
        out
    }
}

pub fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn random_map(rng: &mut ChaCha8Rng, dims: [usize; 3]) -> (RadioMap, WeightMap) {
    let extent = Vec3::new(dims[0] as f64, dims[1] as f64, dims[2] as f64);
    let grid = GridSpec::new(radioplan_core::Aabb::new(Vec3::zeros(), extent), 1.0).unwrap();
    let values = (0..grid.len()).map(|_| rng.random_range(-120.0..-20.0)).collect();
    let weights = (0..grid.len()).map(|_| rng.random_range(0.0..10.0)).collect();
    let map = RadioMap { grid: grid.clone(), antenna: AntennaConfig::default(), min_power_dbm: -150.0, values };
    (map, WeightMap::new(grid, weights).unwrap())
}

/// Weighted sum by explicit triple loop over `(i, j, k)`.
pub fn brute_force_utility(map: &RadioMap, weights: &WeightMap) -> f64 {
    let [nx, ny, nz] = map.grid.dims;
    let mut total = 0.0;
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let flat = (i * ny + j) * nz + k;
                total += weights.values[flat] * map.values[flat];
            }
        }
    }
    total
}

/// Exhaustive search over ceiling voxel centers; ties go to the lowest
/// `(i, j)` index.
pub fn ceiling_oracle(
    scene: &Scene,
    grid: &GridSpec,
    z: f64,
    weights: &WeightMap,
    antenna: &AntennaConfig,
    trace: &radioplan_core::TraceParams,
) -> Vec<(Vec3, f64)> {
    let mut all = Vec::new();
    for i in 0..grid.dims[0] {
        for j in 0..grid.dims[1] {
            let c = grid.center([i, j, 0]);
            let p = Vec3::new(c.x, c.y, z);
            let map = radioplan_core::build_radio_map(scene, &antenna.at(p), grid, trace).unwrap();
            all.push((p, radioplan_core::utility(&map, weights).unwrap()));
        }
    }
    all
}

pub fn oracle_best(candidates: &[(Vec3, f64)]) -> (Vec3, f64) {
    candidates.iter().fold(candidates[0], |best, c| if c.1 > best.1 { *c } else { best })
}
