use serde::{Deserialize, Serialize};

use super::camera::check_rotation;
use super::{CameraPose, GeometryError, Mat3, Mat4, Result, Vec3};

pub const DEFAULT_GIMBAL_BAND_DEG: f64 = 0.5;

/// World-to-camera rigid transform as a homogeneous 4x4 matrix. Also used for
/// relative transforms between two cameras.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrinsic {
    pub matrix: Mat4,
}

impl Extrinsic {
    pub fn new(matrix: Mat4) -> Result<Self> {
        let bottom = matrix.row(3);
        if (bottom[0], bottom[1], bottom[2], bottom[3]) != (0.0, 0.0, 0.0, 1.0) {
            return Err(GeometryError::InvalidTransform("bottom row must be (0,0,0,1)".into()));
        }
        check_rotation(&matrix.fixed_view::<3, 3>(0, 0).into_owned())?;
        if !matrix.iter().all(|x| x.is_finite()) {
            return Err(GeometryError::InvalidTransform("non-finite entry".into()));
        }
        Ok(Self { matrix })
    }

    pub fn identity() -> Self {
        Self { matrix: Mat4::identity() }
    }

    pub fn from_parts(rotation: &Mat3, translation: &Vec3) -> Self {
        let mut m = Mat4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(translation);
        Self { matrix: m }
    }

    /// Inverse of the homogeneous camera-to-world pose.
    pub fn from_pose(pose: &CameraPose) -> Self {
        let rt = pose.rotation.transpose();
        Self::from_parts(&rt, &(-(rt * pose.translation)))
    }

    pub fn to_pose(&self) -> CameraPose {
        let inv = self.inverse();
        CameraPose { rotation: inv.rotation(), translation: inv.translation() }
    }

    pub fn rotation(&self) -> Mat3 {
        self.matrix.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vec3 {
        self.matrix.fixed_view::<3, 1>(0, 3).into_owned()
    }

    /// Rigid inverse (transpose rotation, back-rotate translation).
    pub fn inverse(&self) -> Self {
        let rt = self.rotation().transpose();
        Self::from_parts(&rt, &(-(rt * self.translation())))
    }

    pub fn compose(&self, rhs: &Extrinsic) -> Extrinsic {
        Extrinsic { matrix: self.matrix * rhs.matrix }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation() * p + self.translation()
    }
}

/// `e1 * e0^-1`: maps camera-0 coordinates to camera-1 coordinates.
pub fn compose_relative_transform(e0: &Extrinsic, e1: &Extrinsic) -> Extrinsic {
    e1.compose(&e0.inverse())
}

/// Translation plus intrinsic Y-X-Z Euler angles in degrees:
/// `R = Ry(yaw) * Rx(pitch) * Rz(roll)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YawPitchRoll {
    pub translation: Vec3,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

fn rot_x(deg: f64) -> Mat3 {
    let (s, c) = deg.to_radians().sin_cos();
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y(deg: f64) -> Mat3 {
    let (s, c) = deg.to_radians().sin_cos();
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rot_z(deg: f64) -> Mat3 {
    let (s, c) = deg.to_radians().sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub fn compose_yaw_pitch_roll(ypr: &YawPitchRoll) -> Extrinsic {
    let r = rot_y(ypr.yaw) * rot_x(ypr.pitch) * rot_z(ypr.roll);
    Extrinsic::from_parts(&r, &ypr.translation)
}

/// Splits a rigid transform into translation and Y-X-Z angles. Pitch within
/// `gimbal_band_deg` of +-90 degrees is rejected.
pub fn decompose_yaw_pitch_roll(t: &Extrinsic, gimbal_band_deg: f64) -> Result<YawPitchRoll> {
    let r = t.rotation();
    // R = Ry Rx Rz gives r12 = -sin(pitch), r02 = sin(yaw)cos(pitch),
    // r22 = cos(yaw)cos(pitch), r10 = cos(pitch)sin(roll), r11 = cos(pitch)cos(roll).
    let pitch = (-r[(1, 2)]).clamp(-1.0, 1.0).asin().to_degrees();
    if pitch.abs() >= 90.0 - gimbal_band_deg {
        return Err(GeometryError::GimbalProximity(pitch));
    }
    let yaw = r[(0, 2)].atan2(r[(2, 2)]).to_degrees();
    let roll = r[(1, 0)].atan2(r[(1, 1)]).to_degrees();
    Ok(YawPitchRoll { translation: t.translation(), yaw, pitch, roll })
}

/// Rodrigues rotation matrix, right-hand rule, angle in degrees.
pub fn rotation_about_axis(axis: &Vec3, angle_deg: f64) -> Mat3 {
    let k = axis;
    let (s, c) = angle_deg.to_radians().sin_cos();
    let kx = Mat3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    Mat3::identity() * c + kx * s + (k * k.transpose()) * (1.0 - c)
}

/// `v cos a + (k x v) sin a + k (k . v)(1 - cos a)`.
pub fn rotate_about_axis(v: &Vec3, axis: &Vec3, angle_deg: f64) -> Vec3 {
    let (s, c) = angle_deg.to_radians().sin_cos();
    v * c + axis.cross(v) * s + axis * axis.dot(v) * (1.0 - c)
}

/// Angle in degrees within `[0, 180]`.
pub fn angle_between(a: &Vec3, b: &Vec3) -> Result<f64> {
    let (na, nb) = (a.norm(), b.norm());
    if !(na > 0.0) || !(nb > 0.0) {
        return Err(GeometryError::ZeroVector);
    }
    Ok((a.dot(b) / (na * nb)).clamp(-1.0, 1.0).acos().to_degrees())
}
