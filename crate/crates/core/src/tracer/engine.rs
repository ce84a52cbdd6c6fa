//! Shooting-and-bouncing ray engine over a compiled scene.
//!
//! Rays only *discover* reflection sequences. Every discovered sequence is
//! then rebuilt exactly by mirroring the transmitter across the reflecting
//! faces and walking back from the receiver, so path geometry does not
//! depend on which launched ray found it. Penetrations are recomputed along
//! the exact path.

use std::f64::consts::PI;

use rayon::prelude::*;

use super::{Interaction, PropagationPath, TraceParams};
use crate::error::{Error, Result};
use crate::geometry::{reflect, Aabb, Rect, Vec3, EPS};
use crate::scene::{Obstacle, Scene, Shape};

/// Reflection faces packed 16 bits each (face index + 1), first bounce in
/// the low bits.
pub type SeqKey = u128;

pub const MAX_BOUNCES: u32 = 8;
const MAX_FACES: usize = u16::MAX as usize - 1;
const RAYS_PER_TASK: usize = 256;
const FACE_TOL: f64 = 1e-9;

const BOX_FACE_NAMES: [&str; 6] = ["-x", "+x", "-y", "+y", "-z", "+z"];

#[derive(Clone, Copy, Debug)]
enum Geom {
    Box(Aabb),
    Plane(Rect),
}

#[derive(Debug)]
struct CompiledObstacle {
    id: String,
    geom: Geom,
    reflection_loss_db: f64,
    transmission_loss_db: f64,
}

#[derive(Debug)]
struct Face {
    obstacle: usize,
    rect: Rect,
    name: String,
}

#[derive(Clone, Copy, Debug)]
enum HitKind {
    /// Outer surface of a box or either side of a plane. `exit_t` is the far
    /// side of a box along the same ray.
    Surface { face: usize, exit_t: Option<f64> },
    /// The ray starts inside a box and leaves it here.
    Inside,
}

#[derive(Clone, Copy, Debug)]
struct Hit {
    t: f64,
    kind: HitKind,
}

/// Scene flattened for tracing: scene obstacles first, then boundary planes.
#[derive(Debug)]
pub struct CompiledScene {
    pub bounds: Aabb,
    obstacles: Vec<CompiledObstacle>,
    faces: Vec<Face>,
}

impl CompiledScene {
    pub fn new(scene: &Scene) -> Result<Self> {
        let mut obstacles = Vec::new();
        let mut faces = Vec::new();
        let boundary = scene.boundary_obstacles();
        for ob in scene.obstacles.iter().chain(boundary.iter()) {
            let mat = scene
                .material(&ob.material)
                .ok_or_else(|| Error::validation(format!("{}.material", ob.id), "unknown material"))?;
            let index = obstacles.len();
            let geom = compile_shape(ob);
            match geom {
                Geom::Box(b) => {
                    for (i, name) in BOX_FACE_NAMES.iter().enumerate() {
                        faces.push(Face { obstacle: index, rect: b.face(i), name: format!("{}/{name}", ob.id) });
                    }
                }
                Geom::Plane(rect) => faces.push(Face { obstacle: index, rect, name: ob.id.clone() }),
            }
            obstacles.push(CompiledObstacle {
                id: ob.id.clone(),
                geom,
                reflection_loss_db: mat.reflection_loss_db,
                transmission_loss_db: mat.transmission_loss_db,
            });
        }
        if faces.len() > MAX_FACES {
            return Err(Error::validation("obstacles", format!("too many surfaces ({})", faces.len())));
        }
        Ok(Self { bounds: scene.bounds, obstacles, faces })
    }

    fn nearest_hit(&self, origin: &Vec3, dir: &Vec3) -> Option<(usize, Hit)> {
        let mut best: Option<(usize, Hit)> = None;
        let mut face_base = 0;
        for (i, ob) in self.obstacles.iter().enumerate() {
            let hit = match ob.geom {
                Geom::Box(b) => b.ray_interval(origin, dir).and_then(|(t0, t1, local)| {
                    if t1 <= EPS {
                        None
                    } else if t0 > EPS {
                        Some(Hit { t: t0, kind: HitKind::Surface { face: face_base + local, exit_t: Some(t1) } })
                    } else if t1 - t0.max(0.0) > EPS {
                        Some(Hit { t: t1, kind: HitKind::Inside })
                    } else {
                        None
                    }
                }),
                Geom::Plane(rect) => rect
                    .ray_hit(origin, dir, EPS)
                    .map(|t| Hit { t, kind: HitKind::Surface { face: face_base, exit_t: None } }),
            };
            face_base += match ob.geom {
                Geom::Box(_) => 6,
                Geom::Plane(_) => 1,
            };
            if let Some(h) = hit {
                if best.is_none_or(|(_, b)| h.t < b.t) {
                    best = Some((i, h));
                }
            }
        }
        best
    }

    /// Launches `params.ray_count` rays from `tx` and calls `visit` for every
    /// ray segment that follows at least one reflection. Work is split into
    /// fixed chunks of launch directions; the returned states are in chunk
    /// order, so the output is independent of the worker count.
    pub fn launch<S, I, V>(&self, tx: &Vec3, params: &TraceParams, init: I, visit: V) -> Vec<S>
    where
        S: Send,
        I: Fn() -> S + Sync,
        V: Fn(&mut S, &Vec3, &Vec3, SeqKey) + Sync,
    {
        let n = params.ray_count;
        let chunks = n.div_ceil(RAYS_PER_TASK);
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut state = init();
                let mut seq = Vec::with_capacity(params.max_bounces as usize);
                for i in c * RAYS_PER_TASK..((c + 1) * RAYS_PER_TASK).min(n) {
                    let dir = fibonacci_direction(i, n);
                    let mut sink = |a: &Vec3, b: &Vec3, seq: &[u32]| visit(&mut state, a, b, pack(seq));
                    self.shoot(tx, &dir, &mut seq, 0, params, &mut sink);
                }
                state
            })
            .collect()
    }

    fn shoot(
        &self,
        origin: &Vec3,
        dir: &Vec3,
        seq: &mut Vec<u32>,
        transmissions: u32,
        params: &TraceParams,
        visit: &mut impl FnMut(&Vec3, &Vec3, &[u32]),
    ) {
        let hit = self.nearest_hit(origin, dir);
        let end_t = match hit {
            Some((_, h)) => h.t,
            None => match self.bounds.ray_interval(origin, dir) {
                Some((_, t1, _)) if t1 > 0.0 => t1,
                _ => return,
            },
        };
        let end = origin + dir * end_t;
        if !seq.is_empty() {
            visit(origin, &end, seq);
        }
        let Some((_, h)) = hit else { return };
        match h.kind {
            HitKind::Inside => {
                if transmissions < params.max_transmissions {
                    self.shoot(&end, dir, seq, transmissions + 1, params, visit);
                }
            }
            HitKind::Surface { face, exit_t } => {
                if (seq.len() as u32) < params.max_bounces {
                    let bounced = reflect(dir, &self.faces[face].rect.normal);
                    seq.push(face as u32);
                    self.shoot(&end, &bounced, seq, transmissions, params, visit);
                    seq.pop();
                }
                if transmissions < params.max_transmissions {
                    match exit_t {
                        Some(te) => {
                            let exit = origin + dir * te;
                            if !seq.is_empty() {
                                visit(&end, &exit, seq);
                            }
                            self.shoot(&exit, dir, seq, transmissions + 1, params, visit);
                        }
                        None => self.shoot(&end, dir, seq, transmissions + 1, params, visit),
                    }
                }
            }
        }
    }

    /// Rebuilds the exact path for a reflection sequence between `tx` and
    /// `rx`. Returns `None` when the sequence is not geometrically valid or
    /// needs more than `max_transmissions` penetrations.
    pub fn refine(&self, tx: &Vec3, rx: &Vec3, key: SeqKey, max_transmissions: u32) -> Option<PropagationPath> {
        let seq = unpack(key);
        let mut images = Vec::with_capacity(seq.len() + 1);
        images.push(*tx);
        for &f in &seq {
            let prev = images.last().unwrap();
            images.push(self.faces[f].rect.mirror(prev));
        }

        let mut rev = Vec::with_capacity(seq.len() + 2);
        rev.push(*rx);
        let mut target = *rx;
        for (i, &f) in seq.iter().enumerate().rev() {
            let rect = &self.faces[f].rect;
            let image = images[i + 1];
            let d_target = rect.signed_distance(&target);
            let d_image = rect.signed_distance(&image);
            if d_target * d_image >= 0.0 {
                return None;
            }
            let t = d_target / (d_target - d_image);
            let vertex = target + (image - target) * t;
            if !rect.contains_planar(&vertex, FACE_TOL) {
                return None;
            }
            rev.push(vertex);
            target = vertex;
        }
        rev.push(*tx);
        rev.reverse();
        let vertices = rev;

        let mut total = 0.0;
        let mut transmission_events = Vec::new();
        for w in vertices.windows(2) {
            let len = (w[1] - w[0]).norm();
            if len <= EPS {
                return None;
            }
            total += len;
            self.crossings(&w[0], &w[1], &mut transmission_events);
            if transmission_events.len() > max_transmissions as usize {
                return None;
            }
        }

        let reflection_events = seq
            .iter()
            .map(|&f| {
                let face = &self.faces[f];
                Interaction {
                    surface: face.name.clone(),
                    loss_db: self.obstacles[face.obstacle].reflection_loss_db,
                }
            })
            .collect();

        Some(PropagationPath {
            vertices,
            bounce_count: seq.len(),
            reflection_events,
            transmission_events,
            total_length_m: total,
        })
    }

    /// Obstacles penetrated by the open segment `(a, b)`, in order along it.
    fn crossings(&self, a: &Vec3, b: &Vec3, out: &mut Vec<Interaction>) {
        let d = b - a;
        let len = d.norm();
        let margin = EPS / len;
        let mut found: Vec<(f64, usize)> = Vec::new();
        for (i, ob) in self.obstacles.iter().enumerate() {
            match ob.geom {
                Geom::Box(bx) => {
                    if let Some((t0, t1, _)) = bx.ray_interval(a, &d) {
                        let lo = t0.max(0.0);
                        let hi = t1.min(1.0);
                        if hi - lo > margin {
                            found.push((lo, i));
                        }
                    }
                }
                Geom::Plane(rect) => {
                    let denom = d.dot(&rect.normal);
                    if denom.abs() < 1e-300 {
                        continue;
                    }
                    let t = -rect.signed_distance(a) / denom;
                    if t > margin && t < 1.0 - margin && rect.contains_planar(&(a + d * t), 0.0) {
                        found.push((t, i));
                    }
                }
            }
        }
        found.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        out.extend(found.into_iter().map(|(_, i)| Interaction {
            surface: self.obstacles[i].id.clone(),
            loss_db: self.obstacles[i].transmission_loss_db,
        }));
    }
}

fn compile_shape(ob: &Obstacle) -> Geom {
    match &ob.shape {
        Shape::Box { center, size } => Geom::Box(Aabb::from_center_size(*center, *size)),
        Shape::Plane { corners } => Geom::Plane(Rect::from_corners(corners)),
    }
}

pub fn pack(seq: &[u32]) -> SeqKey {
    seq.iter().enumerate().fold(0, |key, (i, &f)| key | ((f as u128 + 1) << (16 * i)))
}

pub fn unpack(mut key: SeqKey) -> Vec<usize> {
    let mut out = Vec::new();
    while key != 0 {
        out.push((key & 0xffff) as usize - 1);
        key >>= 16;
    }
    out
}

pub fn bounce_count(key: SeqKey) -> u32 {
    (128 - key.leading_zeros()).div_ceil(16)
}

/// Direction `i` of `n` points on a Fibonacci sphere.
pub fn fibonacci_direction(i: usize, n: usize) -> Vec3 {
    let golden = PI * (3.0 - 5f64.sqrt());
    let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
    let r = (1.0 - z * z).max(0.0).sqrt();
    let phi = golden * i as f64;
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}
