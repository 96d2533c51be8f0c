use serde::{Deserialize, Serialize};

use super::{GeometryError, Mat3, Result, Vec3};

const ORTHO_TOL: f64 = 1e-9;

/// Pinhole intrinsics. Pixel coordinates are used as-is: the principal ray
/// passes through `(cx, cy)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let intr = Self { fx, fy, cx, cy, width, height };
        intr.validate()?;
        Ok(intr)
    }

    /// Square pixels with the principal point at the image center.
    pub fn centered(width: u32, height: u32, focal: f64) -> Result<Self> {
        Self::new(focal, focal, width as f64 / 2.0, height as f64 / 2.0, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fx.is_finite() && self.fy > 0.0 && self.fy.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64 && self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Ray direction in the camera frame with unit Z component.
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

/// Camera-to-world rigid pose: `p_world = rotation * p_cam + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl CameraPose {
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        check_rotation(&rotation)?;
        if !translation.iter().all(|x| x.is_finite()) {
            return Err(GeometryError::InvalidTransform("non-finite translation".into()));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self { rotation: Mat3::identity(), translation: Vec3::zeros() }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self { rotation: Mat3::identity(), translation: t }
    }

    /// Camera placed at `eye` looking at `target`, with image-down aligned as
    /// closely as possible to `-up`. Fails when the view direction is parallel
    /// to `up`.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Result<Self> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or(GeometryError::ZeroVector)?;
        let down = -up.try_normalize(1e-12).ok_or(GeometryError::ZeroVector)?;
        let right = down
            .cross(&forward)
            .try_normalize(1e-9)
            .ok_or_else(|| GeometryError::InvalidTransform("view direction parallel to up".into()))?;
        let image_down = forward.cross(&right);
        let rotation = Mat3::from_columns(&[right, image_down, forward]);
        Ok(Self { rotation, translation: eye })
    }

    pub fn center(&self) -> Vec3 {
        self.translation
    }

    /// Optical axis in world coordinates.
    pub fn forward(&self) -> Vec3 {
        self.rotation.column(2).into_owned()
    }

    pub fn camera_to_world(&self, p_cam: &Vec3) -> Vec3 {
        self.rotation * p_cam + self.translation
    }

    pub fn world_to_camera(&self, p_world: &Vec3) -> Vec3 {
        self.rotation.transpose() * (p_world - self.translation)
    }
}

pub(crate) fn check_rotation(r: &Mat3) -> Result<()> {
    if !r.iter().all(|x| x.is_finite()) {
        return Err(GeometryError::InvalidTransform("non-finite rotation".into()));
    }
    let err = (r * r.transpose() - Mat3::identity()).abs().max();
    if err > ORTHO_TOL {
        return Err(GeometryError::InvalidTransform(format!("rotation not orthonormal (err {err:.2e})")));
    }
    if (r.determinant() - 1.0).abs() > ORTHO_TOL {
        return Err(GeometryError::InvalidTransform("rotation determinant is not +1".into()));
    }
    Ok(())
}

/// Row-major depth grid with a per-pixel validity flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    /// All pixels start invalid.
    pub fn new(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        Self { width, height, values: vec![0.0; n], valid: vec![false; n] }
    }

    pub fn constant(width: u32, height: u32, depth: f64) -> Self {
        let mut map = Self::new(width, height);
        for i in 0..map.values.len() {
            map.values[i] = depth;
            map.valid[i] = depth > 0.0 && depth.is_finite();
        }
        map
    }

    fn index(&self, u: u32, v: u32) -> usize {
        v as usize * self.width as usize + u as usize
    }

    /// Stores `depth`; non-positive or non-finite values mark the pixel invalid.
    pub fn set(&mut self, u: u32, v: u32, depth: f64) {
        let i = self.index(u, v);
        let ok = depth > 0.0 && depth.is_finite();
        self.values[i] = if ok { depth } else { 0.0 };
        self.valid[i] = ok;
    }

    pub fn invalidate(&mut self, u: u32, v: u32) {
        let i = self.index(u, v);
        self.values[i] = 0.0;
        self.valid[i] = false;
    }

    pub fn get(&self, u: u32, v: u32) -> Option<f64> {
        if u >= self.width || v >= self.height {
            return None;
        }
        let i = self.index(u, v);
        self.valid[i].then_some(self.values[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

/// Binary pixel mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelMask {
    pub width: u32,
    pub height: u32,
    bits: Vec<bool>,
}

impl PixelMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, bits: vec![false; width as usize * height as usize] }
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self { width, height, bits: vec![true; width as usize * height as usize] }
    }

    pub fn set(&mut self, u: u32, v: u32, on: bool) {
        let i = v as usize * self.width as usize + u as usize;
        self.bits[i] = on;
    }

    pub fn get(&self, u: u32, v: u32) -> bool {
        u < self.width && v < self.height && self.bits[v as usize * self.width as usize + u as usize]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Copy keeping only pixels for which `keep(u, v)` holds.
    pub fn restricted_to(&self, keep: impl Fn(u32, u32) -> bool) -> PixelMask {
        let mut out = PixelMask::new(self.width, self.height);
        for (u, v) in self.pixels() {
            if keep(u, v) {
                out.set(u, v, true);
            }
        }
        out
    }

    /// Set pixels as `(u, v)` in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width as usize;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(move |(i, _)| ((i % w) as u32, (i / w) as u32))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    /// Source view per point, when known.
    pub views: Option<Vec<usize>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        Self { points, views: None }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Option<Vec3> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self.points.iter().fold(Vec3::zeros(), |acc, p| acc + p);
        Some(sum / self.points.len() as f64)
    }

    /// Appends `other`, keeping view tags consistent when both sides carry them.
    pub fn append(&mut self, other: PointCloud) {
        match (&mut self.views, other.views) {
            (Some(mine), Some(theirs)) => mine.extend(theirs),
            (None, Some(theirs)) if self.points.is_empty() => self.views = Some(theirs),
            (mine, _) => *mine = None,
        }
        self.points.extend(other.points);
    }
}

pub fn back_project_pixel(u: f64, v: f64, depth: f64, intr: &CameraIntrinsics, pose: &CameraPose) -> Result<Vec3> {
    if !(depth > 0.0 && depth.is_finite()) {
        return Err(GeometryError::NonPositiveDepth(depth));
    }
    if !intr.contains(u, v) {
        return Err(GeometryError::OutOfBounds { u, v, width: intr.width, height: intr.height });
    }
    let z = depth;
    let x = z * (u - intr.cx) / intr.fx;
    let y = z * (v - intr.cy) / intr.fy;
    Ok(pose.camera_to_world(&Vec3::new(x, y, z)))
}

/// Projects a world point to `(u, v, depth)`. Returns `None` for points at or
/// behind the camera plane. No image-bounds check.
pub fn project_point(p: &Vec3, intr: &CameraIntrinsics, pose: &CameraPose) -> Option<(f64, f64, f64)> {
    let pc = pose.world_to_camera(p);
    if pc.z <= 0.0 {
        return None;
    }
    Some((intr.fx * pc.x / pc.z + intr.cx, intr.fy * pc.y / pc.z + intr.cy, pc.z))
}

pub fn back_project_depth_map(
    depth: &DepthMap,
    mask: Option<&PixelMask>,
    intr: &CameraIntrinsics,
    pose: &CameraPose,
) -> Result<PointCloud> {
    if let Some(m) = mask {
        if m.width != depth.width || m.height != depth.height {
            return Err(GeometryError::MaskMismatch {
                mask_w: m.width,
                mask_h: m.height,
                depth_w: depth.width,
                depth_h: depth.height,
            });
        }
    }
    let mut points = Vec::new();
    for v in 0..depth.height {
        for u in 0..depth.width {
            if mask.is_some_and(|m| !m.get(u, v)) {
                continue;
            }
            if let Some(d) = depth.get(u, v) {
                points.push(back_project_pixel(u as f64, v as f64, d, intr, pose)?);
            }
        }
    }
    if points.is_empty() {
        return Err(GeometryError::EmptySelection);
    }
    Ok(PointCloud::new(points))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_vec_close(a: Vec3, b: Vec3, tol: f64) {
        assert!((a - b).norm() < tol, "{a:?} != {b:?}");
    }

    fn intr_100() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0, 200, 100).unwrap()
    }

    #[test]
    fn principal_point_ray() {
        let intr = intr_100();
        let p = back_project_pixel(intr.cx, intr.cy, 2.0, &intr, &CameraPose::identity()).unwrap();
        assert_vec_close(p, Vec3::new(0.0, 0.0, 2.0), 1e-12);
    }

    #[test]
    fn hand_evaluated_pixel() {
        // X = 1 * (150 - 50) / 100 = 1, Y = 1 * (50 - 50) / 100 = 0
        let p = back_project_pixel(150.0, 50.0, 1.0, &intr_100(), &CameraPose::identity()).unwrap();
        assert_vec_close(p, Vec3::new(1.0, 0.0, 1.0), 1e-12);
    }

    #[test]
    fn translation_equivariance() {
        let intr = intr_100();
        let shift = Vec3::new(0.0, 0.0, 5.0);
        for (u, v) in [(0.0, 0.0), (17.0, 33.0), (199.0, 99.0)] {
            let a = back_project_pixel(u, v, 1.0, &intr, &CameraPose::identity()).unwrap();
            let b = back_project_pixel(u, v, 1.0, &intr, &CameraPose::from_translation(shift)).unwrap();
            assert_vec_close(b - a, shift, 1e-12);
        }
    }

    #[test]
    fn rejects_bad_depth_and_bounds() {
        let intr = intr_100();
        let id = CameraPose::identity();
        assert!(matches!(back_project_pixel(1.0, 1.0, 0.0, &intr, &id), Err(GeometryError::NonPositiveDepth(_))));
        assert!(matches!(back_project_pixel(1.0, 1.0, f64::NAN, &intr, &id), Err(GeometryError::NonPositiveDepth(_))));
        assert!(matches!(back_project_pixel(200.0, 1.0, 1.0, &intr, &id), Err(GeometryError::OutOfBounds { .. })));
        assert!(matches!(back_project_pixel(-0.5, 1.0, 1.0, &intr, &id), Err(GeometryError::OutOfBounds { .. })));
    }

    #[test]
    fn constant_depth_map_matches_per_pixel_oracle() {
        let intr = CameraIntrinsics::new(1.0, 1.0, 1.0, 1.0, 2, 2).unwrap();
        let depth = DepthMap::constant(2, 2, 1.0);
        let cloud = back_project_depth_map(&depth, None, &intr, &CameraPose::identity()).unwrap();
        assert_eq!(cloud.len(), 4);
        let mut i = 0;
        for v in 0..2 {
            for u in 0..2 {
                let expect = back_project_pixel(u as f64, v as f64, 1.0, &intr, &CameraPose::identity()).unwrap();
                assert_vec_close(cloud.points[i], expect, 1e-15);
                assert_eq!(cloud.points[i].z, 1.0);
                i += 1;
            }
        }
    }

    #[test]
    fn empty_mask_is_empty_selection() {
        let intr = CameraIntrinsics::new(1.0, 1.0, 1.0, 1.0, 2, 2).unwrap();
        let depth = DepthMap::constant(2, 2, 1.0);
        let mask = PixelMask::new(2, 2);
        assert_eq!(
            back_project_depth_map(&depth, Some(&mask), &intr, &CameraPose::identity()),
            Err(GeometryError::EmptySelection)
        );
        let wrong = PixelMask::new(3, 2);
        assert!(matches!(
            back_project_depth_map(&depth, Some(&wrong), &intr, &CameraPose::identity()),
            Err(GeometryError::MaskMismatch { .. })
        ));
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, 4, 4).is_ok());
    }

    #[test]
    fn look_at_identity_axes() {
        let pose = CameraPose::look_at(Vec3::zeros(), Vec3::new(0.0, 0.0, 3.0), super::super::default_up()).unwrap();
        assert!((pose.rotation - Mat3::identity()).abs().max() < 1e-12);
        assert!(CameraPose::look_at(Vec3::zeros(), Vec3::new(0.0, 2.0, 0.0), super::super::default_up()).is_err());
    }
}
