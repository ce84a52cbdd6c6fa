//! Voxel grids, RSRP maps, weight maps and the weighted-RSRP utility.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{segment_point_distance, traverse_cells, Aabb, Vec3};
use crate::scene::Scene;
use crate::tracer::engine::{bounce_count, SeqKey};
use crate::tracer::{fspl_db, received_power_dbm, AntennaConfig, CompiledScene, TraceParams};

/// Voxel centers closer than this to the antenna are clamped to the
/// free-space value at this distance.
pub const NEAR_FIELD_M: f64 = 0.25;

/// Equally spaced voxels tiling `bounds`; the last voxel on each axis may
/// be clipped by the bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub bounds: Aabb,
    pub resolution_m: f64,
    pub dims: [usize; 3],
}

impl GridSpec {
    pub fn new(bounds: Aabb, resolution_m: f64) -> Result<Self> {
        if !(resolution_m.is_finite() && resolution_m > 0.0) {
            return Err(Error::validation("grid.resolution_m", "must be positive"));
        }
        let extent = bounds.extent();
        if !(0..3).all(|a| extent[a] > 0.0) {
            return Err(Error::validation("grid.bounds", "extent must be strictly positive"));
        }
        // Tolerate round-off so 15 / 0.5 stays 30 cells.
        let dims = [0, 1, 2].map(|a| ((extent[a] / resolution_m) - 1e-9).ceil().max(1.0) as usize);
        Ok(Self { bounds, resolution_m, dims })
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index with `k` varying fastest.
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    pub fn coords(&self, index: usize) -> [usize; 3] {
        let k = index % self.dims[2];
        let rest = index / self.dims[2];
        [rest / self.dims[1], rest % self.dims[1], k]
    }

    pub fn voxel_bounds(&self, ijk: [usize; 3]) -> Aabb {
        let mut min = Vec3::zeros();
        let mut max = Vec3::zeros();
        for a in 0..3 {
            min[a] = self.bounds.min[a] + ijk[a] as f64 * self.resolution_m;
            max[a] = (min[a] + self.resolution_m).min(self.bounds.max[a]);
        }
        Aabb::new(min, max)
    }

    /// Center of the (possibly clipped) voxel.
    pub fn center(&self, ijk: [usize; 3]) -> Vec3 {
        self.voxel_bounds(ijk).center()
    }

    pub fn centers(&self) -> impl Iterator<Item = Vec3> + '_ {
        (0..self.len()).map(|i| self.center(self.coords(i)))
    }

    /// Shortest voxel edge, counting clipped voxels.
    pub fn min_edge(&self) -> f64 {
        (0..3)
            .map(|a| self.voxel_bounds([self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1]).extent()[a])
            .fold(self.resolution_m, f64::min)
    }

    /// Index of the horizontal voxel layer containing height `z`.
    pub fn layer_of(&self, z: f64) -> Result<usize> {
        let (lo, hi) = (self.bounds.min.z, self.bounds.max.z);
        if !(z >= lo && z <= hi) {
            return Err(Error::HeightOutOfBounds(z));
        }
        let k = ((z - lo) / self.resolution_m).floor() as usize;
        Ok(k.min(self.dims[2] - 1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadioMap {
    pub grid: GridSpec,
    pub antenna: AntennaConfig,
    pub min_power_dbm: f64,
    /// RSRP in dBm, `k` fastest.
    pub values: Vec<f64>,
}

impl RadioMap {
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.grid.index(i, j, k)]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightMap {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl WeightMap {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch(values.len(), grid.len()));
        }
        if values.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::validation("weights", "must be finite and non-negative"));
        }
        Ok(Self { grid, values })
    }

    pub fn uniform(grid: GridSpec, w: f64) -> Result<Self> {
        let n = grid.len();
        Self::new(grid, vec![w; n])
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|w| w * s).collect() }
    }

    pub fn is_all_zero(&self) -> bool {
        self.values.iter().all(|&w| w == 0.0)
    }
}

/// How voxel weights are derived from a scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightPolicy {
    /// Weight of every voxel before traffic sources are added.
    pub base_weight: f64,
    /// Voxels whose center lies within this distance of a machine or a
    /// trajectory segment receive that source's traffic weight.
    pub radius_m: f64,
}

impl Default for WeightPolicy {
    fn default() -> Self {
        Self { base_weight: 1.0, radius_m: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityScale {
    /// Weighted sum of RSRP in dBm.
    #[default]
    Dbm,
    /// Weighted sum of received power in milliwatts.
    Linear,
}

/// RSRP at every voxel center for one antenna position.
///
/// The capture radius is limited to half the shortest voxel edge so each
/// capture sphere stays inside its own voxel; a voxel value then equals
/// [`trace_paths`](crate::tracer::trace_paths) at its center with the same
/// radius.
pub fn build_radio_map(scene: &Scene, antenna: &AntennaConfig, grid: &GridSpec, params: &TraceParams) -> Result<RadioMap> {
    params.validate()?;
    antenna.validate()?;
    if !scene.bounds.contains_with_tol(&antenna.position, 1e-9) {
        let p = antenna.position;
        return Err(Error::AntennaOutsideBounds([p.x, p.y, p.z]));
    }
    let compiled = CompiledScene::new(scene)?;
    build_compiled(&compiled, antenna, grid, params)
}

pub(crate) fn build_compiled(
    compiled: &CompiledScene,
    antenna: &AntennaConfig,
    grid: &GridSpec,
    params: &TraceParams,
) -> Result<RadioMap> {
    let tx = antenna.position;
    let radius = params.rx_capture_radius_m.min(0.5 * grid.min_edge());
    let chunks = compiled.launch(&tx, params, Vec::new, |hits: &mut Vec<(u32, SeqKey)>, a, b, key| {
        traverse_cells(&grid.bounds.min, grid.resolution_m, grid.dims, a, b, |ijk| {
            if segment_point_distance(a, b, &grid.center(ijk)) <= radius {
                hits.push((grid.index(ijk[0], ijk[1], ijk[2]) as u32, key));
            }
        });
    });
    let mut hits: Vec<(u32, SeqKey)> = chunks
        .into_par_iter()
        .flat_map_iter(|mut c| {
            c.sort_unstable();
            c.dedup();
            c
        })
        .collect();
    hits.par_sort_unstable();
    hits.dedup();

    // Offsets of each voxel's run in the sorted hit list.
    let mut starts = vec![0usize; grid.len() + 1];
    for &(v, _) in &hits {
        starts[v as usize + 1] += 1;
    }
    for i in 0..grid.len() {
        starts[i + 1] += starts[i];
    }

    let near_field = antenna.tx_power_dbm + antenna.gain_dbi - fspl_db(NEAR_FIELD_M, antenna.wavelength_m());
    let floor = params.min_power_dbm;
    let values = (0..grid.len())
        .into_par_iter()
        .map(|v| {
            let rx = grid.center(grid.coords(v));
            if (rx - tx).norm() < NEAR_FIELD_M {
                return near_field.max(floor);
            }
            let mut keys: Vec<SeqKey> = hits[starts[v]..starts[v + 1]].iter().map(|h| h.1).collect();
            keys.sort_by_key(|&k| (bounce_count(k), k));
            let paths: Vec<_> = std::iter::once(0)
                .chain(keys)
                .filter_map(|k| compiled.refine(&tx, &rx, k, params.max_transmissions))
                .collect();
            received_power_dbm(&paths, antenna, floor)
        })
        .collect();
    Ok(RadioMap { grid: grid.clone(), antenna: antenna.clone(), min_power_dbm: floor, values })
}

pub fn build_weight_map(scene: &Scene, grid: &GridSpec, policy: &WeightPolicy) -> WeightMap {
    let r = policy.radius_m;
    let values = grid
        .centers()
        .map(|c| {
            let machines: f64 = scene
                .machines
                .iter()
                .filter(|m| (m.position - c).norm() <= r)
                .map(|m| m.traffic_weight)
                .sum();
            let routes: f64 = scene
                .trajectories
                .iter()
                .filter(|t| t.waypoints.windows(2).any(|s| segment_point_distance(&s[0], &s[1], &c) <= r))
                .map(|t| t.traffic_weight)
                .sum();
            policy.base_weight + machines + routes
        })
        .collect();
    WeightMap { grid: grid.clone(), values }
}

/// Weighted sum of RSRP over all voxels.
pub fn utility(map: &RadioMap, weights: &WeightMap) -> Result<f64> {
    utility_scaled(map, weights, UtilityScale::Dbm)
}

pub fn utility_scaled(map: &RadioMap, weights: &WeightMap, scale: UtilityScale) -> Result<f64> {
    if map.grid != weights.grid {
        return Err(Error::GridMismatch);
    }
    let pairs = weights.values.iter().zip(&map.values);
    Ok(match scale {
        UtilityScale::Dbm => pairs.map(|(w, p)| w * p).sum(),
        UtilityScale::Linear => pairs.map(|(w, p)| w * 10f64.powf(p / 10.0)).sum(),
    })
}

/// Empirical CDF of voxel RSRP as `(rsrp_dbm, fraction of voxels ≤ rsrp)`,
/// one entry per distinct value. With a mask, only voxels of positive
/// weight are counted.
pub fn coverage_cdf(map: &RadioMap, mask: Option<&WeightMap>) -> Result<Vec<(f64, f64)>> {
    let mut selected: Vec<f64> = match mask {
        Some(m) => {
            if m.grid != map.grid {
                return Err(Error::GridMismatch);
            }
            map.values.iter().zip(&m.values).filter(|(_, w)| **w > 0.0).map(|(p, _)| *p).collect()
        }
        None => map.values.clone(),
    };
    if selected.is_empty() {
        return Err(Error::EmptySelection);
    }
    selected.sort_by(f64::total_cmp);
    let n = selected.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, v) in selected.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *v => last.1 = frac,
            _ => out.push((*v, frac)),
        }
    }
    Ok(out)
}

/// Smallest RSRP whose cumulative fraction reaches `q`.
pub fn cdf_quantile(cdf: &[(f64, f64)], q: f64) -> Option<f64> {
    cdf.iter().find(|(_, f)| *f >= q).map(|(v, _)| *v)
}

/// One horizontal voxel layer, indexed `values[i][j]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub k: usize,
    /// Height of the layer's voxel centers.
    pub z_m: f64,
    pub origin: [f64; 2],
    pub resolution_m: f64,
    pub dims: [usize; 2],
    pub values: Vec<Vec<f64>>,
}

pub fn horizontal_slice(map: &RadioMap, z_height_m: f64) -> Result<Slice> {
    let grid = &map.grid;
    let k = grid.layer_of(z_height_m)?;
    let values = (0..grid.dims[0])
        .map(|i| (0..grid.dims[1]).map(|j| map.get(i, j, k)).collect())
        .collect();
    Ok(Slice {
        k,
        z_m: grid.center([0, 0, k]).z,
        origin: [grid.bounds.min.x, grid.bounds.min.y],
        resolution_m: grid.resolution_m,
        dims: [grid.dims[0], grid.dims[1]],
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::load_scene;
    use approx::assert_abs_diff_eq;

    fn grid(x: f64, y: f64, z: f64, res: f64) -> GridSpec {
        GridSpec::new(Aabb::new(Vec3::zeros(), Vec3::new(x, y, z)), res).unwrap()
    }

    fn map_with(grid: GridSpec, values: Vec<f64>) -> RadioMap {
        RadioMap { grid, antenna: AntennaConfig::default(), min_power_dbm: -150.0, values }
    }

    #[test]
    fn grid_dims_and_indexing() {
        let g = grid(15.0, 10.0, 4.0, 0.5);
        assert_eq!(g.dims, [30, 20, 8]);
        assert_eq!(g.index(0, 0, 1), 1);
        assert_eq!(g.index(0, 1, 0), 8);
        assert_eq!(g.coords(g.index(7, 3, 5)), [7, 3, 5]);
        assert_abs_diff_eq!(g.center([0, 0, 0]), Vec3::new(0.25, 0.25, 0.25));

        let clipped = grid(1.2, 1.0, 1.0, 0.5);
        assert_eq!(clipped.dims, [3, 2, 2]);
        assert_abs_diff_eq!(clipped.center([2, 0, 0]).x, 1.1, epsilon = 1e-12);
        assert_abs_diff_eq!(clipped.min_edge(), 0.2, epsilon = 1e-12);
        assert!(GridSpec::new(Aabb::new(Vec3::zeros(), Vec3::repeat(1.0)), 0.0).is_err());
    }

    #[test]
    fn layer_lookup() {
        let g = grid(15.0, 10.0, 4.0, 0.5);
        assert_eq!(g.layer_of(0.25).unwrap(), 0);
        assert_eq!(g.layer_of(1.0).unwrap(), 2);
        assert_eq!(g.layer_of(4.0).unwrap(), 7);
        assert!(matches!(g.layer_of(4.5), Err(Error::HeightOutOfBounds(_))));
    }

    #[test]
    fn utility_examples() {
        let g = grid(2.0, 1.0, 1.0, 1.0);
        let m = map_with(g.clone(), vec![-50.0, -60.0]);
        assert_eq!(utility(&m, &WeightMap::uniform(g.clone(), 1.0).unwrap()).unwrap(), -110.0);
        let selector = WeightMap::new(g.clone(), vec![1.0, 0.0]).unwrap();
        assert_eq!(utility(&m, &selector).unwrap(), -50.0);
        let lin = utility_scaled(&m, &selector, UtilityScale::Linear).unwrap();
        assert_abs_diff_eq!(lin, 1e-5, epsilon = 1e-18);
        let other = WeightMap::uniform(grid(1.0, 1.0, 1.0, 1.0), 1.0).unwrap();
        assert!(matches!(utility(&m, &other), Err(Error::GridMismatch)));
    }

    #[test]
    fn cdf_examples() {
        let one = map_with(grid(1.0, 1.0, 1.0, 1.0), vec![-70.0]);
        assert_eq!(coverage_cdf(&one, None).unwrap(), vec![(-70.0, 1.0)]);
        let g = grid(2.0, 1.0, 1.0, 1.0);
        let two = map_with(g.clone(), vec![-50.0, -70.0]);
        assert_eq!(coverage_cdf(&two, None).unwrap(), vec![(-70.0, 0.5), (-50.0, 1.0)]);
        let mask = WeightMap::new(g.clone(), vec![0.0, 2.0]).unwrap();
        assert_eq!(coverage_cdf(&two, Some(&mask)).unwrap(), vec![(-70.0, 1.0)]);
        let none = WeightMap::uniform(g, 0.0).unwrap();
        assert!(matches!(coverage_cdf(&two, Some(&none)), Err(Error::EmptySelection)));
        let ties = map_with(grid(3.0, 1.0, 1.0, 1.0), vec![-60.0, -60.0, -40.0]);
        let cdf = coverage_cdf(&ties, None).unwrap();
        assert_eq!(cdf.len(), 2);
        assert_abs_diff_eq!(cdf[0].1, 2.0 / 3.0);
        assert_eq!(cdf_quantile(&cdf, 0.5), Some(-60.0));
    }

    #[test]
    fn slice_picks_layer() {
        let g = grid(1.0, 1.0, 1.5, 0.5);
        let values = (0..g.len()).map(|v| v as f64).collect();
        let m = map_with(g.clone(), values);
        let s = horizontal_slice(&m, 1.0).unwrap();
        assert_eq!(s.k, 2);
        assert_eq!(s.dims, [2, 2]);
        assert_eq!(s.values[1][0], g.index(1, 0, 2) as f64);
        assert_abs_diff_eq!(s.z_m, 1.25);
        assert!(horizontal_slice(&m, 2.0).is_err());
    }

    #[test]
    fn weight_map_examples() {
        let scene = load_scene(r#"{"bounds": {"x": [0, 4], "y": [0, 4], "z": [0, 2]}}"#).unwrap();
        let g = grid(4.0, 4.0, 2.0, 1.0);
        let w = build_weight_map(&scene, &g, &WeightPolicy::default());
        assert!(w.values.iter().all(|&v| v == 1.0));

        let scene = load_scene(
            r#"{"bounds": {"x": [0, 4], "y": [0, 4], "z": [0, 2]},
                "machines": [{"id": "m", "position": [1.5, 2.5, 0.5], "traffic_weight": 5}]}"#,
        )
        .unwrap();
        let w = build_weight_map(&scene, &g, &WeightPolicy { base_weight: 0.0, radius_m: 0.5 });
        assert_eq!(w.values.iter().filter(|&&v| v == 5.0).count(), 1);
        assert_eq!(w.values.iter().filter(|&&v| v == 0.0).count(), g.len() - 1);
        assert_eq!(w.values[g.index(1, 2, 0)], 5.0);
    }

    #[test]
    fn trajectory_raster_on_small_grid() {
        // A straight route along the middle row of a 10 x 3 x 1 grid.
        let scene = load_scene(
            r#"{"bounds": {"x": [0, 10], "y": [0, 3], "z": [0, 1]},
                "trajectories": [{"id": "agv", "waypoints": [[0, 1.5, 0.5], [10, 1.5, 0.5]], "traffic_weight": 2}]}"#,
        )
        .unwrap();
        let g = grid(10.0, 3.0, 1.0, 1.0);
        let w = build_weight_map(&scene, &g, &WeightPolicy { base_weight: 1.0, radius_m: 0.5 });
        let elevated: Vec<_> = (0..g.len()).filter(|&v| w.values[v] == 3.0).map(|v| g.coords(v)).collect();
        assert_eq!(elevated, (0..10).map(|i| [i, 1, 0]).collect::<Vec<_>>());
        assert_eq!(w.values.iter().filter(|&&v| v == 1.0).count(), 20);
    }

    #[test]
    fn antenna_outside_bounds_is_rejected() {
        let scene = load_scene(r#"{"bounds": {"x": [0, 2], "y": [0, 2], "z": [0, 2]}}"#).unwrap();
        let g = grid(2.0, 2.0, 2.0, 1.0);
        let ant = AntennaConfig { position: Vec3::new(3.0, 1.0, 1.0), ..Default::default() };
        assert!(matches!(
            build_radio_map(&scene, &ant, &g, &TraceParams::default()),
            Err(Error::AntennaOutsideBounds(_))
        ));
    }

    #[test]
    fn near_field_voxel_is_clamped() {
        let scene = load_scene(r#"{"bounds": {"x": [0, 2], "y": [0, 1], "z": [0, 1]}, "boundary": {"enabled": false}}"#).unwrap();
        let g = grid(2.0, 1.0, 1.0, 1.0);
        let ant = AntennaConfig { position: Vec3::new(0.5, 0.5, 0.5), ..Default::default() };
        let map = build_radio_map(&scene, &ant, &g, &TraceParams { ray_count: 100, ..Default::default() }).unwrap();
        let clamp = 24.7 - fspl_db(NEAR_FIELD_M, ant.wavelength_m());
        assert_abs_diff_eq!(map.values[0], clamp, epsilon = 1e-12);
        assert_abs_diff_eq!(map.values[1], 24.7 - fspl_db(1.0, ant.wavelength_m()), epsilon = 1e-12);
    }
}
