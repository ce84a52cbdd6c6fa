//! Camera poses, pinhole projection of radio-map voxels into pixels, and
//! pose error metrics.
//!
//! Quaternions are scalar-last `[x, y, z, w]` (Hamilton). A pose stores the
//! camera-to-world rotation; projection applies its transpose:
//! `[u', v', α]ᵀ = K · R_cwᵀ · (p_w − l_w)`, `u = u'/α`, `v = v'/α`.

use std::collections::BTreeMap;
use std::str::FromStr;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::radiomap::RadioMap;

/// Quaternion `[x, y, z, w]`, not necessarily normalized.
pub type Quat = [f64; 4];

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Orientation {
    Quaternion(Quat),
    /// Axis times angle, radians.
    RotationVector(Vec3),
}

/// Camera pose in the world frame; the orientation is camera-to-world.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraPose {
    pub location: Vec3,
    pub orientation: Orientation,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseDoc {
    location: Vec3,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    quaternion: Option<Quat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rotation_vector: Option<Vec3>,
}

impl Serialize for CameraPose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let (quaternion, rotation_vector) = match self.orientation {
            Orientation::Quaternion(q) => (Some(q), None),
            Orientation::RotationVector(r) => (None, Some(r)),
        };
        PoseDoc { location: self.location, quaternion, rotation_vector }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CameraPose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = PoseDoc::deserialize(d)?;
        let orientation = match (doc.quaternion, doc.rotation_vector) {
            (Some(q), None) => Orientation::Quaternion(q),
            (None, Some(r)) => Orientation::RotationVector(r),
            _ => return Err(serde::de::Error::custom("pose needs exactly one of `quaternion` or `rotation_vector`")),
        };
        Ok(CameraPose { location: doc.location, orientation })
    }
}

impl CameraPose {
    pub fn from_quaternion(location: Vec3, q: Quat) -> Self {
        Self { location, orientation: Orientation::Quaternion(q) }
    }

    /// Unit quaternion of the orientation.
    pub fn quaternion(&self) -> Result<Quat> {
        match self.orientation {
            Orientation::Quaternion(q) => normalize(&q),
            Orientation::RotationVector(r) => Ok(rotation_vector_to_quaternion(&r)),
        }
    }

    /// Camera-to-world rotation.
    pub fn rotation(&self) -> Result<Matrix3<f64>> {
        quaternion_to_rotation(&self.quaternion()?)
    }
}

/// Pinhole intrinsics with zero skew.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::validation("intrinsics.fx", "focal lengths must be positive"));
        }
        if !(self.cx >= 0.0 && self.cx <= self.width as f64 && self.cy >= 0.0 && self.cy <= self.height as f64) {
            return Err(Error::validation("intrinsics.cx", "principal point must lie inside the image"));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }
}

pub fn normalize(q: &Quat) -> Result<Quat> {
    let n = q.iter().map(|c| c * c).sum::<f64>().sqrt();
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::ZeroQuaternion);
    }
    Ok(q.map(|c| c / n))
}

/// Rotation matrix of a (renormalized) quaternion. Only products of pairs of
/// components appear, so `q` and `-q` give bit-identical matrices.
pub fn quaternion_to_rotation(q: &Quat) -> Result<Matrix3<f64>> {
    let [x, y, z, w] = normalize(q)?;
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, xz, yz) = (x * y, x * z, y * z);
    let (wx, wy, wz) = (w * x, w * y, w * z);
    Ok(Matrix3::new(
        1.0 - 2.0 * (yy + zz),
        2.0 * (xy - wz),
        2.0 * (xz + wy),
        2.0 * (xy + wz),
        1.0 - 2.0 * (xx + zz),
        2.0 * (yz - wx),
        2.0 * (xz - wy),
        2.0 * (yz + wx),
        1.0 - 2.0 * (xx + yy),
    ))
}

pub fn rotation_vector_to_quaternion(r: &Vec3) -> Quat {
    let angle = r.norm();
    if angle < 1e-12 {
        // First-order expansion keeps tiny rotations accurate.
        let q = [0.5 * r.x, 0.5 * r.y, 0.5 * r.z, 1.0];
        return normalize(&q).expect("non-zero");
    }
    let axis = r / angle;
    let s = (0.5 * angle).sin();
    [axis.x * s, axis.y * s, axis.z * s, (0.5 * angle).cos()]
}

pub fn quaternion_to_rotation_vector(q: &Quat) -> Result<Vec3> {
    let [x, y, z, w] = normalize(q)?;
    // Pick the representative with w >= 0 so the angle lies in [0, π].
    let s = if w < 0.0 { -1.0 } else { 1.0 };
    let v = Vec3::new(x, y, z) * s;
    let sin_half = v.norm();
    if sin_half < 1e-12 {
        return Ok(v * 2.0);
    }
    let angle = 2.0 * sin_half.atan2(w * s);
    Ok(v * (angle / sin_half))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
    /// Camera-frame depth (the third homogeneous coordinate).
    pub alpha: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Projection {
    InFrame(PixelPoint),
    OutOfFrame(PixelPoint),
    BehindCamera { alpha: f64 },
}

impl Projection {
    pub fn pixel(&self) -> Option<PixelPoint> {
        match self {
            Projection::InFrame(p) | Projection::OutOfFrame(p) => Some(*p),
            Projection::BehindCamera { .. } => None,
        }
    }
}

pub fn project_point(pose: &CameraPose, intr: &Intrinsics, p_w: &Vec3) -> Result<Projection> {
    let r_cw = pose.rotation()?;
    Ok(project_with(&r_cw, &pose.location, intr, p_w))
}

fn project_with(r_cw: &Matrix3<f64>, location: &Vec3, intr: &Intrinsics, p_w: &Vec3) -> Projection {
    let h = intr.matrix() * (r_cw.transpose() * (p_w - location));
    let alpha = h.z;
    if alpha <= 0.0 {
        return Projection::BehindCamera { alpha };
    }
    let px = PixelPoint { u: h.x / alpha, v: h.y / alpha, alpha };
    let inside = px.u >= 0.0 && px.u <= intr.width as f64 && px.v >= 0.0 && px.v <= intr.height as f64;
    if inside {
        Projection::InFrame(px)
    } else {
        Projection::OutOfFrame(px)
    }
}

/// Inverse of [`project_point`] for a known depth.
pub fn back_project(pose: &CameraPose, intr: &Intrinsics, px: &PixelPoint) -> Result<Vec3> {
    let r_cw = pose.rotation()?;
    let cam = Vec3::new((px.u - intr.cx) / intr.fx * px.alpha, (px.v - intr.cy) / intr.fy * px.alpha, px.alpha);
    Ok(r_cw * cam + pose.location)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlayPixel {
    pub u: u32,
    pub v: u32,
    pub rsrp_dbm: f64,
    pub depth_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    /// Sorted by row, then column.
    pub pixels: Vec<OverlayPixel>,
    pub frame_size: [u32; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OverlayOptions {
    /// Project only the voxel layer containing this height; `None` projects
    /// every voxel.
    pub slice_z: Option<f64>,
}

impl Default for OverlayOptions {
    fn default() -> Self {
        Self { slice_z: Some(1.0) }
    }
}

/// Projects voxel centers into the frame. Each pixel keeps the nearest voxel.
pub fn project_radio_map(map: &RadioMap, pose: &CameraPose, intr: &Intrinsics, opts: &OverlayOptions) -> Result<Overlay> {
    intr.validate()?;
    let r_cw = pose.rotation()?;
    let grid = &map.grid;
    let layer = match opts.slice_z {
        Some(z) => Some(grid.layer_of(z.clamp(grid.bounds.min.z, grid.bounds.max.z))?),
        None => None,
    };
    let mut buckets: BTreeMap<(u32, u32), OverlayPixel> = BTreeMap::new();
    for (index, rsrp) in map.values.iter().enumerate() {
        let ijk = grid.coords(index);
        if layer.is_some_and(|k| k != ijk[2]) {
            continue;
        }
        let Projection::InFrame(px) = project_with(&r_cw, &pose.location, intr, &grid.center(ijk)) else {
            continue;
        };
        let (u, v) = (px.u.floor(), px.v.floor());
        if u >= intr.width as f64 || v >= intr.height as f64 {
            continue;
        }
        let pixel = OverlayPixel { u: u as u32, v: v as u32, rsrp_dbm: *rsrp, depth_m: px.alpha };
        buckets
            .entry((pixel.v, pixel.u))
            .and_modify(|old| {
                if pixel.depth_m < old.depth_m {
                    *old = pixel;
                }
            })
            .or_insert(pixel);
    }
    Ok(Overlay { pixels: buckets.into_values().collect(), frame_size: [intr.width, intr.height] })
}

pub fn location_error(estimate: &CameraPose, truth: &CameraPose) -> f64 {
    (estimate.location - truth.location).norm()
}

/// Angle between two rotations in degrees, `2·acos|⟨q̂, q⟩|`.
pub fn orientation_angle_error(estimate: &Quat, truth: &Quat) -> Result<f64> {
    Ok(quaternion_angle(estimate, truth)?.to_degrees())
}

fn quaternion_angle(a: &Quat, b: &Quat) -> Result<f64> {
    let (a, b) = (normalize(a)?, normalize(b)?);
    let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let b = if dot < 0.0 { b.map(|c| -c) } else { b };
    // Equal to 2·acos|⟨a, b⟩| but accurate for nearly equal rotations.
    let diff = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let sum = a.iter().zip(&b).map(|(x, y)| (x + y) * (x + y)).sum::<f64>().sqrt();
    Ok(4.0 * diff.atan2(sum))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossMode {
    /// Location distance plus Euclidean distance between orientation
    /// vectors (quaternions or rotation vectors, as given).
    #[serde(rename = "W_Euc_Euc")]
    WEucEuc,
    /// Location distance plus quaternion angle error in radians.
    #[serde(rename = "W_Euc_Ang")]
    WEucAng,
}

impl FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "W_Euc_Euc" => Ok(LossMode::WEucEuc),
            "W_Euc_Ang" => Ok(LossMode::WEucAng),
            other => Err(Error::UnknownMode(other.to_string())),
        }
    }
}

pub fn pose_loss(estimate: &CameraPose, truth: &CameraPose, mode: LossMode, beta: f64) -> Result<f64> {
    let loc = location_error(estimate, truth);
    let orient = match mode {
        LossMode::WEucEuc => match (estimate.orientation, truth.orientation) {
            (Orientation::Quaternion(a), Orientation::Quaternion(b)) => {
                let (a, b) = (normalize(&a)?, normalize(&b)?);
                a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
            }
            (Orientation::RotationVector(a), Orientation::RotationVector(b)) => (a - b).norm(),
            _ => return Err(Error::RepresentationMismatch),
        },
        LossMode::WEucAng => quaternion_angle(&estimate.quaternion()?, &truth.quaternion()?)?,
    };
    Ok(loc + beta * orient)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_4;

    fn intr() -> Intrinsics {
        Intrinsics { fx: 100.0, fy: 100.0, cx: 50.0, cy: 50.0, width: 100, height: 100 }
    }

    fn identity_pose() -> CameraPose {
        CameraPose::from_quaternion(Vec3::zeros(), [0.0, 0.0, 0.0, 1.0])
    }

    #[test]
    fn rotation_examples() {
        assert_eq!(quaternion_to_rotation(&[0.0, 0.0, 0.0, 1.0]).unwrap(), Matrix3::identity());
        let qz = [0.0, 0.0, FRAC_PI_4.sin(), FRAC_PI_4.cos()];
        let r = quaternion_to_rotation(&qz).unwrap();
        assert_abs_diff_eq!(r * Vec3::x(), Vec3::y(), epsilon = 1e-15);
        let neg = qz.map(|c| -c);
        assert_eq!(quaternion_to_rotation(&neg).unwrap(), r);
        assert!(matches!(quaternion_to_rotation(&[0.0; 4]), Err(Error::ZeroQuaternion)));
        // Unnormalized input is renormalized.
        assert_abs_diff_eq!(quaternion_to_rotation(&[0.0, 0.0, 0.0, 3.0]).unwrap(), Matrix3::identity());
    }

    #[test]
    fn projection_examples() {
        let p = project_point(&identity_pose(), &intr(), &Vec3::new(0.0, 0.0, 2.0)).unwrap();
        assert_eq!(p, Projection::InFrame(PixelPoint { u: 50.0, v: 50.0, alpha: 2.0 }));
        let p = project_point(&identity_pose(), &intr(), &Vec3::new(1.0, 0.0, 2.0)).unwrap();
        assert_eq!(p, Projection::InFrame(PixelPoint { u: 100.0, v: 50.0, alpha: 2.0 }));
        let p = project_point(&identity_pose(), &intr(), &Vec3::new(0.0, 0.0, -1.0)).unwrap();
        assert_eq!(p, Projection::BehindCamera { alpha: -1.0 });
        let p = project_point(&identity_pose(), &intr(), &Vec3::new(2.0, 0.0, 2.0)).unwrap();
        assert!(matches!(p, Projection::OutOfFrame(_)));
    }

    #[test]
    fn rotation_vector_conversions() {
        let r = Vec3::new(0.3, -0.2, 1.1);
        let q = rotation_vector_to_quaternion(&r);
        assert_abs_diff_eq!(quaternion_to_rotation_vector(&q).unwrap(), r, epsilon = 1e-12);
        let pose_r = CameraPose { location: Vec3::zeros(), orientation: Orientation::RotationVector(r) };
        let pose_q = CameraPose::from_quaternion(Vec3::zeros(), q);
        assert_abs_diff_eq!(pose_r.rotation().unwrap(), pose_q.rotation().unwrap(), epsilon = 1e-15);
        assert_eq!(rotation_vector_to_quaternion(&Vec3::zeros()), [0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn metric_examples() {
        let a = identity_pose();
        let b = CameraPose::from_quaternion(Vec3::new(0.03, 0.04, 0.0), [0.0, 0.0, FRAC_PI_4.sin(), FRAC_PI_4.cos()]);
        assert_eq!(location_error(&a, &a), 0.0);
        assert_abs_diff_eq!(location_error(&a, &b), 0.05, epsilon = 1e-15);
        assert_eq!(location_error(&a, &b), location_error(&b, &a));

        let q = [0.1, -0.4, 0.3, 0.8];
        assert_eq!(orientation_angle_error(&q, &q).unwrap(), 0.0);
        assert_eq!(orientation_angle_error(&q.map(|c| -c), &q).unwrap(), 0.0);
        let qb = b.quaternion().unwrap();
        assert_abs_diff_eq!(orientation_angle_error(&[0.0, 0.0, 0.0, 1.0], &qb).unwrap(), 90.0, epsilon = 1e-12);
    }

    #[test]
    fn loss_examples() {
        let a = identity_pose();
        let b = CameraPose::from_quaternion(Vec3::new(0.03, 0.04, 0.0), [0.0, 0.0, FRAC_PI_4.sin(), FRAC_PI_4.cos()]);
        for mode in [LossMode::WEucEuc, LossMode::WEucAng] {
            assert_eq!(pose_loss(&a, &a, mode, 2.0).unwrap(), 0.0);
            assert_abs_diff_eq!(pose_loss(&a, &b, mode, 0.0).unwrap(), 0.05, epsilon = 1e-15);
        }
        // |q̂ - q| = sqrt(sin²45° + (1 - cos45°)²) = sqrt(2 - √2)
        let euc = 0.05 + 0.5 * (2.0 - 2f64.sqrt()).sqrt();
        assert_abs_diff_eq!(pose_loss(&a, &b, LossMode::WEucEuc, 0.5).unwrap(), euc, epsilon = 1e-12);
        let ang = 0.05 + 0.5 * std::f64::consts::FRAC_PI_2;
        assert_abs_diff_eq!(pose_loss(&a, &b, LossMode::WEucAng, 0.5).unwrap(), ang, epsilon = 1e-12);

        let rv = CameraPose { location: Vec3::zeros(), orientation: Orientation::RotationVector(Vec3::zeros()) };
        assert!(matches!(pose_loss(&a, &rv, LossMode::WEucEuc, 1.0), Err(Error::RepresentationMismatch)));
        assert_abs_diff_eq!(pose_loss(&a, &rv, LossMode::WEucAng, 1.0).unwrap(), 0.0);
        assert!(matches!("W_Foo".parse::<LossMode>(), Err(Error::UnknownMode(_))));
    }

    #[test]
    fn pose_json_format() {
        let pose: CameraPose = serde_json::from_str(r#"{"location": [1, 2, 3], "quaternion": [0, 0, 0, 1]}"#).unwrap();
        assert_eq!(pose, CameraPose::from_quaternion(Vec3::new(1.0, 2.0, 3.0), [0.0, 0.0, 0.0, 1.0]));
        assert_eq!(serde_json::to_string(&pose).unwrap(), r#"{"location":[1.0,2.0,3.0],"quaternion":[0.0,0.0,0.0,1.0]}"#);
        assert!(serde_json::from_str::<CameraPose>(r#"{"location": [1, 2, 3]}"#).is_err());
        let intr: Intrinsics =
            serde_json::from_str(r#"{"fx": 100, "fy": 100, "cx": 50, "cy": 50, "width": 100, "height": 100}"#).unwrap();
        assert_eq!(intr, self::intr());
    }
}
