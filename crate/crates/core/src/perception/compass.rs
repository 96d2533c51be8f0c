use serde::{Deserialize, Serialize};

use crate::geometry::{angle_between, project_point_to_plane, rotate_about_axis, GroundPlane, Vec3};
use crate::labels::CompassLabel;

use super::{PerceptionError, Result};

const COINCIDENT_EPS: f64 = 1e-6;
const TIE_EPS_DEG: f64 = 1e-9;

/// Compass basis on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundFrame {
    pub north: Vec3,
    pub south: Vec3,
    pub east: Vec3,
    pub west: Vec3,
    pub up: Vec3,
    pub anchor: Vec3,
}

impl GroundFrame {
    /// Unit vector for any of the eight labels, built from the basis.
    pub fn direction(&self, label: CompassLabel) -> Vec3 {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match label {
            CompassLabel::North => self.north,
            CompassLabel::East => self.east,
            CompassLabel::South => self.south,
            CompassLabel::West => self.west,
            CompassLabel::Northeast => (self.north + self.east) * h,
            CompassLabel::Southeast => (self.south + self.east) * h,
            CompassLabel::Southwest => (self.south + self.west) * h,
            CompassLabel::Northwest => (self.north + self.west) * h,
        }
    }
}

fn ground_offset(anchor: &Vec3, target: &Vec3, ground: &GroundPlane) -> Result<(Vec3, Vec3)> {
    let a = project_point_to_plane(anchor, ground);
    let d = project_point_to_plane(target, ground) - a;
    if d.norm() < COINCIDENT_EPS {
        return Err(PerceptionError::CoincidentProjection);
    }
    Ok((a, d))
}

/// Builds the compass from a stated relation "`target` lies `stated` of
/// `anchor`". The anchor-to-target ray gets the stated bearing; north is that
/// ray turned back by the bearing.
pub fn calibrate_frame(anchor: &Vec3, target: &Vec3, stated: CompassLabel, ground: &GroundPlane) -> Result<GroundFrame> {
    let (a, d) = ground_offset(anchor, target, ground)?;
    let up = ground.normal;
    let north = rotate_about_axis(&d.normalize(), &up, stated.bearing());
    let west = up.cross(&north).normalize();
    Ok(GroundFrame { north, south: -north, east: -west, west, up, anchor: a })
}

/// Closest compass label to the ground direction from `anchor` to `target`.
/// Exact ties resolve in N, E, S, W, NE, SE, SW, NW order.
pub fn direction_label(frame: &GroundFrame, anchor: &Vec3, target: &Vec3, granularity: u32) -> Result<CompassLabel> {
    let labels: &[CompassLabel] = match granularity {
        4 => &CompassLabel::CARDINAL,
        8 => &CompassLabel::ALL,
        g => return Err(PerceptionError::InvalidGranularity(g)),
    };
    let plane = GroundPlane::through_point(frame.up, &frame.anchor)?;
    let (_, v) = ground_offset(anchor, target, &plane)?;
    let mut best = (labels[0], f64::INFINITY);
    for &label in labels {
        let ang = angle_between(&v, &frame.direction(label))?;
        if ang < best.1 - TIE_EPS_DEG {
            best = (label, ang);
        }
    }
    Ok(best.0)
}
