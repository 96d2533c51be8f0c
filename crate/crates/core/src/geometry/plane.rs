use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use super::{default_up, GeometryError, Mat3, Result, Vec3};

/// Plane `normal . p + offset = 0` with a unit, up-oriented normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundPlane {
    pub normal: Vec3,
    pub offset: f64,
}

impl GroundPlane {
    /// Normalizes `normal` (scaling `offset` accordingly).
    pub fn new(normal: Vec3, offset: f64) -> Result<Self> {
        let len = normal.norm();
        if !(len > 1e-12) || !len.is_finite() {
            return Err(GeometryError::ZeroVector);
        }
        Ok(Self { normal: normal / len, offset: offset / len })
    }

    pub fn through_point(normal: Vec3, point: &Vec3) -> Result<Self> {
        let n = normal.try_normalize(1e-12).ok_or(GeometryError::ZeroVector)?;
        Ok(Self { normal: n, offset: -n.dot(point) })
    }

    /// The synthetic-scene floor: `y = 0` with up `(0, -1, 0)`.
    pub fn y_zero() -> Self {
        Self { normal: default_up(), offset: 0.0 }
    }

    /// Positive above the plane (on the side the normal points to).
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) + self.offset
    }
}

/// Up reference and the ambiguity threshold used when orienting normals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpConvention {
    pub up_ref: Vec3,
    pub tau_up: f64,
}

impl Default for UpConvention {
    fn default() -> Self {
        Self { up_ref: default_up(), tau_up: 1e-3 }
    }
}

/// Returns `normal` or `-normal`, whichever points along `up_ref`.
pub fn orient_normal_up(normal: &Vec3, up_ref: &Vec3, tau_up: f64) -> Result<Vec3> {
    let d = normal.dot(up_ref);
    if d.abs() < tau_up {
        return Err(GeometryError::NearHorizontal(d.abs()));
    }
    Ok(if d > 0.0 { *normal } else { -normal })
}

/// Least-squares plane through `points`: the normal is the eigenvector of the
/// centered covariance with the smallest eigenvalue.
pub fn fit_plane_pca(points: &[Vec3], up: &UpConvention) -> Result<GroundPlane> {
    if points.len() < 3 {
        return Err(GeometryError::DegenerateCloud(format!("{} points, need at least 3", points.len())));
    }
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vec3::zeros(), |acc, p| acc + p) / n;
    let mut cov = Mat3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    cov /= n;

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (smallest, middle, largest) = (order[0], order[1], order[2]);
    let scale = eig.eigenvalues[largest];
    if !(scale > 0.0) || eig.eigenvalues[middle] <= 1e-12 * scale {
        return Err(GeometryError::DegenerateCloud("covariance rank below 2 (collinear or coincident points)".into()));
    }

    let raw = eig.eigenvectors.column(smallest).into_owned().normalize();
    let normal = orient_normal_up(&raw, &up.up_ref, up.tau_up)?;
    Ok(GroundPlane { normal, offset: -normal.dot(&centroid) })
}

/// Orthogonal projection onto the plane.
pub fn project_point_to_plane(p: &Vec3, plane: &GroundPlane) -> Vec3 {
    p - plane.normal * plane.signed_distance(p)
}
