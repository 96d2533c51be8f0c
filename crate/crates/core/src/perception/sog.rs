//! Coarse-to-fine orientation grounding: candidate ground directions are drawn
//! as arrows in the original view and in an elevated virtual view, and a
//! vision backend picks the arrow matching the query.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backends::VisionBackend;
use crate::geometry::{
    rotate_about_axis, CameraIntrinsics, CameraPose, GeometryError, GroundPlane, PointCloud, Vec3,
};

use super::overlay::{anchor_pixel, sog_overlay, ArrowOverlay, ViewKind};
use super::{locate_object, PerceptionError, Result, SceneReconstruction};

/// Angular offsets of the fine candidates around the coarse winner.
pub const FINE_OFFSETS_DEG: [f64; 5] = [-45.0, -22.5, 0.0, 22.5, 45.0];
const CANONICAL_TILT_DEG: f64 = 45.0;
const AXIS_EPS: f64 = 1e-6;
const DECILE: f64 = 0.1;
pub const DEFAULT_ARROW_LENGTH: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateStage {
    Coarse,
    Fine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionCandidateSet {
    pub anchor_point: Vec3,
    pub up: Vec3,
    pub vectors: Vec<Vec3>,
    pub stage: CandidateStage,
    pub labels: Vec<String>,
}

fn numbered(n: usize) -> Vec<String> {
    (1..=n).map(|i| i.to_string()).collect()
}

/// In-plane reference axis: the world axis least aligned with `up`, projected
/// onto the ground.
fn reference_axis(up: &Vec3) -> Vec3 {
    let axes = [Vec3::x(), Vec3::y(), Vec3::z()];
    let a = axes
        .into_iter()
        .min_by(|a, b| a.dot(up).abs().total_cmp(&b.dot(up).abs()))
        .expect("three axes");
    (a - up * up.dot(&a)).normalize()
}

/// Four ground directions a quarter turn apart, starting at a seeded random
/// azimuth.
pub fn sog_coarse_candidates(anchor_point: &Vec3, ground: &GroundPlane, rng_seed: u64) -> DirectionCandidateSet {
    let up = ground.normal;
    let phi: f64 = ChaCha8Rng::seed_from_u64(rng_seed).random_range(0.0..360.0);
    let base = reference_axis(&up);
    let vectors = (0..4).map(|k| rotate_about_axis(&base, &up, phi + 90.0 * k as f64)).collect();
    DirectionCandidateSet { anchor_point: *anchor_point, up, vectors, stage: CandidateStage::Coarse, labels: numbered(4) }
}

/// Five directions spread around `winner` at [`FINE_OFFSETS_DEG`].
pub fn sog_fine_candidates(winner: &Vec3, anchor_point: &Vec3, ground: &GroundPlane) -> DirectionCandidateSet {
    let up = ground.normal;
    let vectors = FINE_OFFSETS_DEG.iter().map(|&t| rotate_about_axis(winner, &up, t)).collect();
    DirectionCandidateSet { anchor_point: *anchor_point, up, vectors, stage: CandidateStage::Fine, labels: numbered(5) }
}

/// Centroid of the object's points lying in the lowest tenth by height above
/// the ground, so arrows start near the floor.
pub fn sog_anchor_point(object_points: &PointCloud, ground: &GroundPlane) -> Result<Vec3> {
    if object_points.is_empty() {
        return Err(PerceptionError::EmptyCloud);
    }
    let mut d: Vec<f64> = object_points.points.iter().map(|p| ground.signed_distance(p)).collect();
    d.sort_by(f64::total_cmp);
    let k = ((DECILE * d.len() as f64).ceil() as usize).max(1) - 1;
    let cut = d[k] + 1e-9;
    let band: Vec<&Vec3> = object_points.points.iter().filter(|p| ground.signed_distance(p) <= cut).collect();
    Ok(band.iter().fold(Vec3::zeros(), |acc, p| acc + *p) / band.len() as f64)
}

/// Virtual camera looking down on the anchor: the original center orbits by
/// 45 degrees about the horizontal axis through the anchor, in whichever
/// sense raises it, and is re-aimed at the anchor with no roll.
pub fn sog_canonical_view(
    _intr: &CameraIntrinsics,
    pose: &CameraPose,
    anchor_point: &Vec3,
    ground: &GroundPlane,
) -> Result<CameraPose> {
    let up = ground.normal;
    let center = pose.center();
    let v_co = (anchor_point - center).try_normalize(1e-12).ok_or(PerceptionError::DegenerateAxis)?;
    let axis = v_co.cross(&up);
    if axis.norm() < AXIS_EPS {
        return Err(PerceptionError::DegenerateAxis);
    }
    let axis = axis.normalize();
    let offset = center - anchor_point;
    let raise = |deg: f64| anchor_point + rotate_about_axis(&offset, &axis, deg);
    let (a, b) = (raise(CANONICAL_TILT_DEG), raise(-CANONICAL_TILT_DEG));
    let eye = if up.dot(&(a - anchor_point)) >= up.dot(&(b - anchor_point)) { a } else { b };
    CameraPose::look_at(eye, *anchor_point, up).map_err(|e| match e {
        GeometryError::InvalidTransform(_) => PerceptionError::DegenerateAxis,
        other => other.into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SogOutcome {
    pub direction: Vec3,
    pub view: usize,
    pub coarse: DirectionCandidateSet,
    pub coarse_choice: usize,
    pub fine: DirectionCandidateSet,
    pub fine_choice: usize,
}

fn select(vision: &dyn VisionBackend, situated: &ArrowOverlay, canonical: &ArrowOverlay, query: &str) -> Result<usize> {
    let count = situated.arrows.len();
    let mut answer = 0;
    for attempt in 0..2 {
        answer = vision.select_arrow(situated, canonical, query)?;
        if answer < count {
            return Ok(answer);
        }
        log::warn!("arrow selector answered {answer} of {count} (attempt {})", attempt + 1);
    }
    Err(PerceptionError::SelectionOutOfRange { answer, count })
}

fn overlay_pair(
    set: &super::DirectionCandidateSet,
    view: &super::ViewData,
    canonical: &CameraPose,
    arrow_length: f64,
) -> Result<(ArrowOverlay, ArrowOverlay)> {
    let situated = sog_overlay(set, &view.intrinsics, &view.pose, arrow_length, ViewKind::Situated)?;
    let elevated = sog_overlay(set, &view.intrinsics, canonical, arrow_length, ViewKind::Canonical)?;
    Ok((situated, elevated))
}

/// Full two-stage grounding of `query` (e.g. "the facing direction of the
/// chair") around `anchor_object`.
pub fn sog_ground_direction(
    query: &str,
    anchor_object: &str,
    recon: &SceneReconstruction,
    vision: &dyn VisionBackend,
    rng_seed: u64,
    arrow_length: f64,
) -> Result<SogOutcome> {
    let loc = locate_object(anchor_object, recon, vision)?
        .ok_or_else(|| PerceptionError::ObjectNotFound(anchor_object.to_string()))?;
    let anchor = sog_anchor_point(&loc.points, &recon.ground)?;
    // Prefer the view the object was found in; fall back to any view that sees the anchor.
    let order = std::iter::once(loc.view).chain((0..recon.views.len()).filter(|&v| v != loc.view));
    let mut chosen = None;
    let mut last_err = PerceptionError::AnchorOutOfView;
    for v in order {
        let data = recon.view(v)?;
        match anchor_pixel(&anchor, &data.intrinsics, &data.pose) {
            Ok(_) => {
                chosen = Some(v);
                break;
            }
            Err(e) => last_err = e,
        }
    }
    let view_idx = chosen.ok_or(last_err)?;
    let view = recon.view(view_idx)?;
    let canonical = sog_canonical_view(&view.intrinsics, &view.pose, &anchor, &recon.ground)?;

    let coarse = sog_coarse_candidates(&anchor, &recon.ground, rng_seed);
    let (s, c) = overlay_pair(&coarse, view, &canonical, arrow_length)?;
    let coarse_choice = select(vision, &s, &c, query)?;

    let fine = sog_fine_candidates(&coarse.vectors[coarse_choice], &anchor, &recon.ground);
    let (s, c) = overlay_pair(&fine, view, &canonical, arrow_length)?;
    let fine_choice = select(vision, &s, &c, query)?;

    Ok(SogOutcome { direction: fine.vectors[fine_choice], view: view_idx, coarse, coarse_choice, fine, fine_choice })
}
