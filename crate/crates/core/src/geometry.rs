//! Small geometry kernel: axis-aligned boxes, finite rectangles, segment
//! distances, and a voxel traversal used by the tracer.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;

/// Intersections closer than this along a ray are treated as self-hits.
pub const EPS: f64 = 1e-7;

/// Axis-aligned box. Zero thickness on an axis is allowed (used for
/// horizontal deployment patches).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn from_center_size(center: Vec3, size: Vec3) -> Self {
        let half = size * 0.5;
        Self { min: center - half, max: center + half }
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        self.contains_with_tol(p, 0.0)
    }

    pub fn contains_with_tol(&self, p: &Vec3, tol: f64) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] - tol && p[a] <= self.max[a] + tol)
    }

    pub fn clamp(&self, p: &Vec3) -> Vec3 {
        Vec3::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
            p.z.clamp(self.min.z, self.max.z),
        )
    }

    /// Intersection of two boxes; `None` when they are disjoint. Touching
    /// boxes yield a degenerate (zero-thickness) result.
    pub fn intersect(&self, other: &Aabb) -> Option<Aabb> {
        let min = self.min.sup(&other.min);
        let max = self.max.inf(&other.max);
        (0..3).all(|a| min[a] <= max[a]).then_some(Aabb { min, max })
    }

    /// Slab test. Returns the parameter interval `[t_enter, t_exit]` where the
    /// line `origin + t * dir` is inside the box, together with the face
    /// index (see [`Aabb::face`]) crossed at `t_enter`.
    pub fn ray_interval(&self, origin: &Vec3, dir: &Vec3) -> Option<(f64, f64, usize)> {
        let mut t_enter = f64::NEG_INFINITY;
        let mut t_exit = f64::INFINITY;
        let mut enter_face = 0;
        for a in 0..3 {
            let d = dir[a];
            if d.abs() < 1e-300 {
                if origin[a] < self.min[a] || origin[a] > self.max[a] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / d;
            let t0 = (self.min[a] - origin[a]) * inv;
            let t1 = (self.max[a] - origin[a]) * inv;
            let (near, far, face) = if inv >= 0.0 { (t0, t1, 2 * a) } else { (t1, t0, 2 * a + 1) };
            if near > t_enter {
                t_enter = near;
                enter_face = face;
            }
            if far < t_exit {
                t_exit = far;
            }
            if t_enter > t_exit {
                return None;
            }
        }
        Some((t_enter, t_exit, enter_face))
    }

    /// Face rectangles ordered `-x, +x, -y, +y, -z, +z`.
    pub fn face(&self, index: usize) -> Rect {
        let (lo, hi) = (self.min, self.max);
        let axis = index / 2;
        let at_max = index % 2 == 1;
        let (u, v) = match axis {
            0 => (1, 2),
            1 => (2, 0),
            _ => (0, 1),
        };
        let mut origin = lo;
        if at_max {
            origin[axis] = hi[axis];
        }
        let mut edge_u = Vec3::zeros();
        edge_u[u] = hi[u] - lo[u];
        let mut edge_v = Vec3::zeros();
        edge_v[v] = hi[v] - lo[v];
        let mut normal = Vec3::zeros();
        normal[axis] = if at_max { 1.0 } else { -1.0 };
        Rect { origin, edge_u, edge_v, normal }
    }
}

/// Finite rectangle in 3D: `origin + s * edge_u + t * edge_v`, `s, t ∈ [0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub origin: Vec3,
    pub edge_u: Vec3,
    pub edge_v: Vec3,
    /// Unit normal.
    pub normal: Vec3,
}

impl Rect {
    /// Builds a rectangle from four corners given in boundary order.
    pub fn from_corners(corners: &[Vec3; 4]) -> Self {
        let edge_u = corners[1] - corners[0];
        let edge_v = corners[3] - corners[0];
        let normal = edge_u.cross(&edge_v).normalize();
        Self { origin: corners[0], edge_u, edge_v, normal }
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        (p - self.origin).dot(&self.normal)
    }

    /// Mirror image of `p` across the supporting plane.
    pub fn mirror(&self, p: &Vec3) -> Vec3 {
        p - self.normal * (2.0 * self.signed_distance(p))
    }

    /// Whether a point on the supporting plane falls within the rectangle.
    pub fn contains_planar(&self, p: &Vec3, tol: f64) -> bool {
        let rel = p - self.origin;
        let s = rel.dot(&self.edge_u) / self.edge_u.norm_squared();
        let t = rel.dot(&self.edge_v) / self.edge_v.norm_squared();
        let tol_s = tol / self.edge_u.norm();
        let tol_t = tol / self.edge_v.norm();
        s >= -tol_s && s <= 1.0 + tol_s && t >= -tol_t && t <= 1.0 + tol_t
    }

    /// Ray parameter of the hit with the rectangle, if any, beyond `t_min`.
    pub fn ray_hit(&self, origin: &Vec3, dir: &Vec3, t_min: f64) -> Option<f64> {
        let denom = dir.dot(&self.normal);
        if denom.abs() < 1e-300 {
            return None;
        }
        let t = -self.signed_distance(origin) / denom;
        if t <= t_min || !t.is_finite() {
            return None;
        }
        self.contains_planar(&(origin + dir * t), 0.0).then_some(t)
    }

    pub fn area(&self) -> f64 {
        self.edge_u.cross(&self.edge_v).norm()
    }
}

/// Reflects `dir` about a plane with unit normal `normal`.
pub fn reflect(dir: &Vec3, normal: &Vec3) -> Vec3 {
    dir - normal * (2.0 * dir.dot(normal))
}

/// Euclidean distance from `p` to the closed segment `[a, b]`.
pub fn segment_point_distance(a: &Vec3, b: &Vec3, p: &Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (a + ab * t - p).norm()
}

/// Visits every cell of a regular lattice crossed by the segment `[p0, p1]`
/// (Amanatides–Woo traversal). The lattice starts at `origin`, has cubic
/// cells of edge `cell`, and `dims` cells per axis.
pub fn traverse_cells(
    origin: &Vec3,
    cell: f64,
    dims: [usize; 3],
    p0: &Vec3,
    p1: &Vec3,
    mut visit: impl FnMut([usize; 3]),
) {
    let upper = origin + Vec3::new(dims[0] as f64, dims[1] as f64, dims[2] as f64) * cell;
    let lattice = Aabb::new(*origin, upper);
    let d = p1 - p0;
    let Some((t_enter, t_exit, _)) = lattice.ray_interval(p0, &d) else {
        return;
    };
    let t0 = t_enter.max(0.0);
    let t1 = t_exit.min(1.0);
    if t0 > t1 {
        return;
    }
    let start = p0 + d * t0;
    let mut idx = [0i64; 3];
    let mut step = [0i64; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for a in 0..3 {
        let rel = ((start[a] - origin[a]) / cell).floor() as i64;
        idx[a] = rel.clamp(0, dims[a] as i64 - 1);
        if d[a] > 0.0 {
            step[a] = 1;
            let boundary = origin[a] + (idx[a] + 1) as f64 * cell;
            t_max[a] = (boundary - p0[a]) / d[a];
            t_delta[a] = cell / d[a];
        } else if d[a] < 0.0 {
            step[a] = -1;
            let boundary = origin[a] + idx[a] as f64 * cell;
            t_max[a] = (boundary - p0[a]) / d[a];
            t_delta[a] = -cell / d[a];
        }
    }
    loop {
        visit([idx[0] as usize, idx[1] as usize, idx[2] as usize]);
        let a = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
            0
        } else if t_max[1] <= t_max[2] {
            1
        } else {
            2
        };
        if t_max[a] > t1 {
            break;
        }
        idx[a] += step[a];
        if idx[a] < 0 || idx[a] >= dims[a] as i64 {
            break;
        }
        t_max[a] += t_delta[a];
    }
}
