//! Camera models, back-projection, plane fitting, rigid transforms and
//! rotations. Everything here is pure and works in `f64`.
//!
//! Camera frame: +X right, +Y down, +Z forward. The default world "up"
//! reference is `(0, -1, 0)`.

mod camera;
mod plane;
mod transform;

pub use camera::{
    back_project_depth_map, back_project_pixel, project_point, CameraIntrinsics, CameraPose,
    DepthMap, PixelMask, PointCloud,
};
pub use plane::{fit_plane_pca, orient_normal_up, project_point_to_plane, GroundPlane, UpConvention};
pub use transform::{
    angle_between, compose_relative_transform, compose_yaw_pitch_roll, decompose_yaw_pitch_roll,
    rotate_about_axis, rotation_about_axis, Extrinsic, YawPitchRoll, DEFAULT_GIMBAL_BAND_DEG,
};

use thiserror::Error;

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;
pub type Mat4 = nalgebra::Matrix4<f64>;

/// Default world up reference, matching a Y-down camera convention.
pub fn default_up() -> Vec3 {
    Vec3::new(0.0, -1.0, 0.0)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("depth must be positive and finite, got {0}")]
    NonPositiveDepth(f64),
    #[error("pixel ({u}, {v}) outside {width}x{height} image")]
    OutOfBounds { u: f64, v: f64, width: u32, height: u32 },
    #[error("no valid pixel survived selection")]
    EmptySelection,
    #[error("degenerate point cloud: {0}")]
    DegenerateCloud(String),
    #[error("normal is near-horizontal relative to up reference (|n.up| = {0:.3e})")]
    NearHorizontal(f64),
    #[error("pitch {0:.3} deg is within the gimbal band")]
    GimbalProximity(f64),
    #[error("zero-length vector")]
    ZeroVector,
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid rigid transform: {0}")]
    InvalidTransform(String),
    #[error("mask dimensions {mask_w}x{mask_h} do not match depth map {depth_w}x{depth_h}")]
    MaskMismatch { mask_w: u32, mask_h: u32, depth_w: u32, depth_h: u32 },
}

pub type Result<T> = std::result::Result<T, GeometryError>;
