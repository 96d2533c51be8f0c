//! Perception toolbox: reconstruction assembly, object localization, compass
//! calibration, arrow-based direction grounding and relative-pose descriptors.

mod compass;
mod movement;
mod overlay;
mod sog;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, ImageRef, ReconstructionProvider, VisionBackend};
use crate::geometry::{
    back_project_depth_map, fit_plane_pca, CameraIntrinsics, CameraPose, DepthMap, GeometryError, GroundPlane,
    PixelMask, PointCloud, UpConvention, Vec3,
};

pub use compass::{calibrate_frame, direction_label, GroundFrame};
pub use movement::{egocentric_label, relative_camera_movement, relative_object_position, MovementDescriptors};
pub use overlay::{sog_overlay, Arrow, ArrowOverlay, ViewKind};
pub use sog::{
    sog_anchor_point, sog_canonical_view, sog_coarse_candidates, sog_fine_candidates, sog_ground_direction,
    CandidateStage, DirectionCandidateSet, SogOutcome, DEFAULT_ARROW_LENGTH, FINE_OFFSETS_DEG,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    #[error("reconstruction provider failed: {0}")]
    ProviderFailure(String),
    #[error("ground estimation failed: {0}")]
    GroundEstimationFailure(String),
    #[error("detection failed: {0}")]
    DetectionFailure(String),
    #[error("object '{0}' could not be located")]
    ObjectNotFound(String),
    #[error("anchor and target coincide after ground projection")]
    CoincidentProjection,
    #[error("granularity must be 4 or 8, got {0}")]
    InvalidGranularity(u32),
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("anchor lies behind the camera")]
    AnchorBehindCamera,
    #[error("anchor projects outside the image")]
    AnchorOutOfView,
    #[error("camera-to-anchor direction is parallel to up")]
    DegenerateAxis,
    #[error("selector answered {answer} but only {count} candidates exist")]
    SelectionOutOfRange { answer: usize, count: usize },
    #[error("view {0} out of range")]
    BadView(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

pub type Result<T> = std::result::Result<T, PerceptionError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewData {
    pub intrinsics: CameraIntrinsics,
    pub pose: CameraPose,
    pub depth: DepthMap,
}

/// Which branch produced the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroundSource {
    FloorMask,
    FullCloud,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneReconstruction {
    pub views: Vec<ViewData>,
    pub cloud: PointCloud,
    pub ground: GroundPlane,
    pub floor_confidence: f64,
    pub ground_source: GroundSource,
}

impl SceneReconstruction {
    pub fn view(&self, index: usize) -> Result<&ViewData> {
        self.views.get(index).ok_or(PerceptionError::BadView(index))
    }

    pub fn up(&self) -> Vec3 {
        self.ground.normal
    }
}

/// Floor-mask confidence below which the ground falls back to the full cloud.
pub const DEFAULT_FLOOR_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundConfig {
    pub up: UpConvention,
    pub floor_threshold: f64,
}

impl Default for GroundConfig {
    fn default() -> Self {
        Self { up: UpConvention::default(), floor_threshold: DEFAULT_FLOOR_THRESHOLD }
    }
}

pub fn reconstruct(
    images: &[ImageRef],
    provider: &dyn ReconstructionProvider,
    config: &GroundConfig,
) -> Result<SceneReconstruction> {
    if images.is_empty() {
        return Err(PerceptionError::ProviderFailure("no views given".into()));
    }
    let out = provider.reconstruct(images).map_err(|e| PerceptionError::ProviderFailure(e.to_string()))?;
    let n = images.len();
    if out.intrinsics.len() != n || out.poses.len() != n || out.depths.len() != n {
        return Err(PerceptionError::ProviderFailure(format!(
            "expected {n} views, got {} intrinsics / {} poses / {} depth maps",
            out.intrinsics.len(),
            out.poses.len(),
            out.depths.len()
        )));
    }
    if let Some(masks) = &out.floor_masks {
        if masks.len() != n {
            return Err(PerceptionError::ProviderFailure(format!("expected {n} floor masks, got {}", masks.len())));
        }
    }
    let views: Vec<ViewData> = (0..n)
        .map(|i| ViewData { intrinsics: out.intrinsics[i], pose: out.poses[i], depth: out.depths[i].clone() })
        .collect();
    let mut cloud = PointCloud::default();
    for (i, v) in views.iter().enumerate() {
        match back_project_depth_map(&v.depth, None, &v.intrinsics, &v.pose) {
            Ok(mut part) => {
                part.views = Some(vec![i; part.len()]);
                cloud.append(part);
            }
            Err(GeometryError::EmptySelection) => {}
            Err(e) => return Err(PerceptionError::ProviderFailure(e.to_string())),
        }
    }
    let (ground, ground_source) =
        estimate_ground_plane(&views, &cloud, out.floor_masks.as_deref(), out.floor_confidence, config)?;
    Ok(SceneReconstruction { views, cloud, ground, floor_confidence: out.floor_confidence, ground_source })
}

/// Fits the floor from masked pixels when the floor detector is confident,
/// otherwise from the whole fused cloud.
pub fn estimate_ground_plane(
    views: &[ViewData],
    cloud: &PointCloud,
    floor_masks: Option<&[PixelMask]>,
    confidence: f64,
    config: &GroundConfig,
) -> Result<(GroundPlane, GroundSource)> {
    if cloud.is_empty() {
        return Err(PerceptionError::EmptyCloud);
    }
    let fail = |e: GeometryError| PerceptionError::GroundEstimationFailure(e.to_string());
    if let Some(masks) = floor_masks.filter(|_| confidence >= config.floor_threshold) {
        let mut floor = Vec::new();
        for (v, mask) in views.iter().zip(masks) {
            match back_project_depth_map(&v.depth, Some(mask), &v.intrinsics, &v.pose) {
                Ok(pc) => floor.extend(pc.points),
                Err(GeometryError::EmptySelection) => {}
                Err(e) => return Err(fail(e)),
            }
        }
        log::debug!("ground plane from {} floor-mask points", floor.len());
        return Ok((fit_plane_pca(&floor, &config.up).map_err(fail)?, GroundSource::FloorMask));
    }
    log::debug!("ground plane fallback over the full cloud ({} points)", cloud.len());
    Ok((fit_plane_pca(&cloud.points, &config.up).map_err(fail)?, GroundSource::FullCloud))
}

/// A located object: the view it was found in, its back-projected mask points
/// and their centroid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectLocation {
    pub view: usize,
    pub centroid: Vec3,
    pub points: PointCloud,
}

/// `Ok(None)` when the vision backend finds no view showing the object.
pub fn locate_object(
    description: &str,
    recon: &SceneReconstruction,
    vision: &dyn VisionBackend,
) -> Result<Option<ObjectLocation>> {
    let all: Vec<usize> = (0..recon.views.len()).collect();
    let Some(view) = vision.select_view(&all, description)? else {
        return Ok(None);
    };
    let data = recon.view(view)?;
    let det = vision.detect_object(view, description)?;
    let mask = vision.segment(view, &det.bbox)?;
    if mask.width != data.depth.width || mask.height != data.depth.height {
        return Err(PerceptionError::DetectionFailure("mask size differs from the view".into()));
    }
    let points = match back_project_depth_map(&data.depth, Some(&mask), &data.intrinsics, &data.pose) {
        Ok(p) => p,
        Err(GeometryError::EmptySelection) => {
            return Err(PerceptionError::DetectionFailure(format!("empty segmentation for '{description}'")))
        }
        Err(e) => return Err(e.into()),
    };
    let centroid = points.centroid().ok_or(PerceptionError::EmptyCloud)?;
    Ok(Some(ObjectLocation { view, centroid, points }))
}
