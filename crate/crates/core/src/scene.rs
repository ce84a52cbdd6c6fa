//! Propagation environment: bounds, obstacles with materials, traffic
//! sources, and the JSON scene document.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Rect, Vec3};

/// Schema version written to and accepted from scene documents.
pub const SCENE_VERSION: u32 = 1;

const COPLANAR_TOL: f64 = 1e-6;
const DEFAULT_HEIGHT: [f64; 2] = [0.0, 4.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    /// Power loss per specular bounce, dB.
    pub reflection_loss_db: f64,
    /// Power loss per penetration, dB.
    pub transmission_loss_db: f64,
}

impl Material {
    pub const fn new(reflection_loss_db: f64, transmission_loss_db: f64) -> Self {
        Self { reflection_loss_db, transmission_loss_db }
    }
}

/// Built-in material table; scene documents may override or extend it.
pub fn default_materials() -> BTreeMap<String, Material> {
    [
        ("metal", Material::new(3.0, 30.0)),
        ("concrete", Material::new(6.0, 10.0)),
        ("drywall", Material::new(8.0, 3.0)),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Box { center: Vec3, size: Vec3 },
    /// Finite rectangle; corners listed in boundary order.
    Plane { corners: [Vec3; 4] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub id: String,
    pub class_label: String,
    pub shape: Shape,
    /// Key into [`Scene::materials`].
    pub material: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Machine {
    pub id: String,
    pub position: Vec3,
    pub traffic_weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trajectory {
    pub id: String,
    pub waypoints: Vec<Vec3>,
    pub traffic_weight: f64,
}

/// Floor, ceiling and walls synthesized from the bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Boundary {
    #[serde(default = "default_true")]
    pub enabled: bool,
    #[serde(default = "default_boundary_material")]
    pub material: String,
}

impl Default for Boundary {
    fn default() -> Self {
        Self { enabled: true, material: default_boundary_material() }
    }
}

fn default_true() -> bool {
    true
}

fn default_boundary_material() -> String {
    "concrete".to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsDoc {
    x: [f64; 2],
    y: [f64; 2],
    #[serde(default = "default_height")]
    z: [f64; 2],
}

fn default_height() -> [f64; 2] {
    DEFAULT_HEIGHT
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDoc {
    #[serde(default = "scene_version")]
    v: u32,
    #[serde(default)]
    name: String,
    bounds: BoundsDoc,
    #[serde(default)]
    materials: BTreeMap<String, Material>,
    #[serde(default)]
    boundary: Boundary,
    #[serde(default)]
    obstacles: Vec<Obstacle>,
    #[serde(default)]
    machines: Vec<Machine>,
    #[serde(default)]
    trajectories: Vec<Trajectory>,
}

fn scene_version() -> u32 {
    SCENE_VERSION
}

/// A validated scene. Immutable once loaded.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub name: String,
    pub bounds: Aabb,
    pub obstacles: Vec<Obstacle>,
    pub machines: Vec<Machine>,
    pub trajectories: Vec<Trajectory>,
    pub materials: BTreeMap<String, Material>,
    pub boundary: Boundary,
}

/// Parses and validates a scene document.
pub fn load_scene(source: &str) -> Result<Scene> {
    let doc: SceneDoc = serde_json::from_str(source)?;
    Scene::from_doc(doc)
}

impl Scene {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Scene> {
        load_scene(&std::fs::read_to_string(path)?)
    }

    /// Canonical JSON form: the full material table is written out, so the
    /// document reloads to an identical scene.
    pub fn to_json(&self) -> String {
        let doc = SceneDoc {
            v: SCENE_VERSION,
            name: self.name.clone(),
            bounds: BoundsDoc {
                x: [self.bounds.min.x, self.bounds.max.x],
                y: [self.bounds.min.y, self.bounds.max.y],
                z: [self.bounds.min.z, self.bounds.max.z],
            },
            materials: self.materials.clone(),
            boundary: self.boundary.clone(),
            obstacles: self.obstacles.clone(),
            machines: self.machines.clone(),
            trajectories: self.trajectories.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("scene serializes")
    }

    pub fn material(&self, name: &str) -> Option<&Material> {
        self.materials.get(name)
    }

    /// The six room-boundary planes, or nothing when the boundary is disabled.
    pub fn boundary_obstacles(&self) -> Vec<Obstacle> {
        if !self.boundary.enabled {
            return Vec::new();
        }
        let room = self.bounds;
        ["x_min", "x_max", "y_min", "y_max", "z_min", "z_max"]
            .iter()
            .enumerate()
            .map(|(i, side)| {
                let f = room.face(i);
                Obstacle {
                    id: format!("boundary.{side}"),
                    class_label: "boundary".to_string(),
                    shape: Shape::Plane {
                        corners: [
                            f.origin,
                            f.origin + f.edge_u,
                            f.origin + f.edge_u + f.edge_v,
                            f.origin + f.edge_v,
                        ],
                    },
                    material: self.boundary.material.clone(),
                }
            })
            .collect()
    }

    fn from_doc(doc: SceneDoc) -> Result<Scene> {
        if doc.v != SCENE_VERSION {
            return Err(Error::validation("v", format!("unsupported version {}", doc.v)));
        }
        let bounds = validate_bounds(&doc.bounds)?;

        let mut materials = default_materials();
        for (name, m) in doc.materials {
            for (field, value) in [
                ("reflection_loss_db", m.reflection_loss_db),
                ("transmission_loss_db", m.transmission_loss_db),
            ] {
                if !value.is_finite() || value < 0.0 {
                    return Err(Error::validation(
                        format!("materials.{name}.{field}"),
                        "must be finite and non-negative",
                    ));
                }
            }
            materials.insert(name, m);
        }
        if doc.boundary.enabled && !materials.contains_key(&doc.boundary.material) {
            return Err(Error::validation(
                "boundary.material",
                format!("unknown material `{}`", doc.boundary.material),
            ));
        }

        let mut ids = BTreeSet::new();
        for (i, ob) in doc.obstacles.iter().enumerate() {
            let path = format!("obstacles[{i}]");
            if !ids.insert(ob.id.as_str()) {
                return Err(Error::validation(format!("{path}.id"), format!("duplicate id `{}`", ob.id)));
            }
            if !materials.contains_key(&ob.material) {
                return Err(Error::validation(
                    format!("{path}.material"),
                    format!("unknown material `{}`", ob.material),
                ));
            }
            validate_shape(&ob.shape, &bounds, &format!("{path}.shape"))?;
        }

        for (i, m) in doc.machines.iter().enumerate() {
            let path = format!("machines[{i}]");
            check_point(&m.position, &bounds, &format!("{path}.position"))?;
            check_weight(m.traffic_weight, &format!("{path}.traffic_weight"))?;
        }

        for (i, t) in doc.trajectories.iter().enumerate() {
            let path = format!("trajectories[{i}]");
            if t.waypoints.len() < 2 {
                return Err(Error::validation(format!("{path}.waypoints"), "needs at least 2 waypoints"));
            }
            for (j, w) in t.waypoints.iter().enumerate() {
                check_point(w, &bounds, &format!("{path}.waypoints[{j}]"))?;
            }
            check_weight(t.traffic_weight, &format!("{path}.traffic_weight"))?;
        }

        Ok(Scene {
            name: doc.name,
            bounds,
            obstacles: doc.obstacles,
            machines: doc.machines,
            trajectories: doc.trajectories,
            materials,
            boundary: doc.boundary,
        })
    }
}

fn validate_bounds(b: &BoundsDoc) -> Result<Aabb> {
    for (axis, r) in [("x", b.x), ("y", b.y), ("z", b.z)] {
        if !r[0].is_finite() || !r[1].is_finite() {
            return Err(Error::validation(format!("bounds.{axis}"), "must be finite"));
        }
        if r[1] <= r[0] {
            return Err(Error::validation(format!("bounds.{axis}"), "extent must be strictly positive"));
        }
    }
    Ok(Aabb::new(Vec3::new(b.x[0], b.y[0], b.z[0]), Vec3::new(b.x[1], b.y[1], b.z[1])))
}

fn check_point(p: &Vec3, bounds: &Aabb, path: &str) -> Result<()> {
    if !p.iter().all(|c| c.is_finite()) {
        return Err(Error::validation(path, "must be finite"));
    }
    if !bounds.contains_with_tol(p, COPLANAR_TOL) {
        return Err(Error::validation(path, "lies outside the scene bounds"));
    }
    Ok(())
}

fn check_weight(w: f64, path: &str) -> Result<()> {
    if !w.is_finite() || w < 0.0 {
        return Err(Error::validation(path, "must be finite and non-negative"));
    }
    Ok(())
}

fn validate_shape(shape: &Shape, bounds: &Aabb, path: &str) -> Result<()> {
    match shape {
        Shape::Box { center, size } => {
            check_point(center, bounds, &format!("{path}.box.center"))?;
            if !size.iter().all(|s| s.is_finite() && *s > 0.0) {
                return Err(Error::validation(format!("{path}.box.size"), "must be strictly positive"));
            }
        }
        Shape::Plane { corners } => {
            for (i, c) in corners.iter().enumerate() {
                check_point(c, bounds, &format!("{path}.plane.corners[{i}]"))?;
            }
            let u = corners[1] - corners[0];
            let v = corners[3] - corners[0];
            let n = u.cross(&v);
            if n.norm() <= COPLANAR_TOL * COPLANAR_TOL {
                return Err(Error::validation(format!("{path}.plane.corners"), "rectangle has zero area"));
            }
            let off_plane = (corners[2] - corners[0]).dot(&n.normalize()).abs();
            if off_plane > COPLANAR_TOL {
                return Err(Error::validation(format!("{path}.plane.corners"), "corners are not coplanar"));
            }
            let closes = (corners[1] + v - corners[2]).norm();
            if closes > COPLANAR_TOL || u.dot(&v).abs() > COPLANAR_TOL * u.norm() * v.norm() {
                return Err(Error::validation(format!("{path}.plane.corners"), "corners do not form a rectangle"));
            }
        }
    }
    Ok(())
}

impl Shape {
    pub fn as_box(&self) -> Option<Aabb> {
        match self {
            Shape::Box { center, size } => Some(Aabb::from_center_size(*center, *size)),
            Shape::Plane { .. } => None,
        }
    }

    pub fn as_rect(&self) -> Option<Rect> {
        match self {
            Shape::Plane { corners } => Some(Rect::from_corners(corners)),
            Shape::Box { .. } => None,
        }
    }
}

/// Mean position of all machines.
pub fn geometric_center(scene: &Scene) -> Result<Vec3> {
    if scene.machines.is_empty() {
        return Err(Error::EmptyMachines);
    }
    let sum = scene.machines.iter().fold(Vec3::zeros(), |acc, m| acc + m.position);
    Ok(sum / scene.machines.len() as f64)
}

/// Mean over objects of the per-object RMSE across the three axes.
pub fn object_position_rmse(ground_truth: &[Vec3], estimated: &[Vec3]) -> Result<f64> {
    if ground_truth.len() != estimated.len() {
        return Err(Error::LengthMismatch(ground_truth.len(), estimated.len()));
    }
    if ground_truth.is_empty() {
        return Err(Error::EmptyInput);
    }
    let total: f64 = ground_truth
        .iter()
        .zip(estimated)
        .map(|(p, q)| ((p - q).norm_squared() / 3.0).sqrt())
        .sum();
    Ok(total / ground_truth.len() as f64)
}
