//! Ground-truth backends answering from a synthetic scene.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{angle_between, PixelMask};
use crate::perception::ArrowOverlay;
use crate::scene_sim::{render_depth, Surface, SyntheticScene};

use super::{
    BackendError, BoundingBox, Detection, ImageRef, ProviderOutput, ReconstructionProvider, Result, VisionBackend,
};

/// Index of the scene object named in `text`. The longest whole-word match
/// wins so "table lamp" beats "table".
fn mentioned_object(scene: &SyntheticScene, text: &str) -> Option<usize> {
    let lower = text.to_lowercase();
    let words: Vec<&str> = lower.split(|c: char| !c.is_alphanumeric() && c != '_').filter(|w| !w.is_empty()).collect();
    let mut best: Option<(usize, usize)> = None;
    for (i, obj) in scene.objects.iter().enumerate() {
        let name = obj.name.to_lowercase();
        let parts: Vec<&str> = name.split(|c: char| !c.is_alphanumeric() && c != '_').filter(|w| !w.is_empty()).collect();
        if parts.is_empty() {
            continue;
        }
        let hit = words.windows(parts.len()).any(|w| w == parts.as_slice());
        if hit && best.is_none_or(|(_, len)| name.len() > len) {
            best = Some((i, name.len()));
        }
    }
    best.map(|(i, _)| i)
}

/// Vision answers read off exact renders. Reconstruction view `k` is scene
/// camera `views[k]`.
#[derive(Debug, Clone)]
pub struct OracleVision {
    scene: Arc<SyntheticScene>,
    views: Vec<usize>,
}

impl OracleVision {
    pub fn new(scene: impl Into<Arc<SyntheticScene>>) -> Self {
        let scene = scene.into();
        let views = (0..scene.view_count()).collect();
        Self { scene, views }
    }

    pub fn with_views(mut self, views: Vec<usize>) -> Self {
        self.views = views;
        self
    }

    pub fn scene(&self) -> &SyntheticScene {
        &self.scene
    }

    fn camera(&self, view: usize) -> Result<usize> {
        self.views
            .get(view)
            .copied()
            .filter(|&c| c < self.scene.view_count())
            .ok_or_else(|| BackendError::Precondition(format!("view {view} is not part of this episode")))
    }

    fn render(&self, view: usize) -> Result<Arc<crate::scene_sim::RenderedView>> {
        self.scene.rendered(self.camera(view)?).map_err(|e| BackendError::Precondition(e.to_string()))
    }

    fn object(&self, description: &str) -> Result<usize> {
        mentioned_object(&self.scene, description)
            .ok_or_else(|| BackendError::NotFound(format!("no scene object matches '{description}'")))
    }

    /// Angles between each candidate and the true direction for the query.
    fn arrow_errors(&self, overlay: &ArrowOverlay, query: &str) -> Result<Vec<f64>> {
        let obj = &self.scene.objects[self.object(query)?];
        let truth = obj.facing.ok_or_else(|| BackendError::NotFound(format!("'{}' has no facing direction", obj.name)))?;
        overlay
            .candidates
            .vectors
            .iter()
            .map(|v| angle_between(v, &truth).map_err(|e| BackendError::Precondition(e.to_string())))
            .collect()
    }
}

/// Candidate indices ordered by error; ties keep the lower index first.
fn ranked(errors: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..errors.len()).collect();
    order.sort_by(|&a, &b| {
        let (ea, eb) = (errors[a], errors[b]);
        if (ea - eb).abs() <= 1e-9 {
            a.cmp(&b)
        } else {
            ea.total_cmp(&eb)
        }
    });
    order
}

fn same_candidates(a: &ArrowOverlay, b: &ArrowOverlay) -> Result<()> {
    if a.candidates.vectors != b.candidates.vectors {
        return Err(BackendError::Precondition("overlays show different candidate sets".into()));
    }
    Ok(())
}

impl VisionBackend for OracleVision {
    fn select_view(&self, views: &[usize], description: &str) -> Result<Option<usize>> {
        if views.is_empty() {
            return Err(BackendError::Precondition("no views to choose from".into()));
        }
        let Some(obj) = mentioned_object(&self.scene, description) else {
            return Ok(None);
        };
        let mut best: Option<(usize, usize)> = None;
        for &v in views {
            let area = self.render(v)?.object_pixel_count(obj);
            if area > 0 && best.is_none_or(|(_, a)| area > a) {
                best = Some((v, area));
            }
        }
        Ok(best.map(|(v, _)| v))
    }

    fn detect_object(&self, view: usize, description: &str) -> Result<Detection> {
        let obj = self.object(description)?;
        let r = self.render(view)?;
        let mask = r.object_mask(obj);
        let (mut lo_u, mut lo_v, mut hi_u, mut hi_v) = (u32::MAX, u32::MAX, 0, 0);
        for (u, v) in mask.pixels() {
            lo_u = lo_u.min(u);
            lo_v = lo_v.min(v);
            hi_u = hi_u.max(u + 1);
            hi_v = hi_v.max(v + 1);
        }
        if lo_u == u32::MAX {
            return Err(BackendError::NotFound(format!("'{description}' is not visible in view {view}")));
        }
        Ok(Detection { bbox: BoundingBox { min_u: lo_u, min_v: lo_v, max_u: hi_u, max_v: hi_v }, confidence: 1.0 })
    }

    /// Silhouette of the object covering most of the box, clipped to it.
    fn segment(&self, view: usize, bbox: &BoundingBox) -> Result<PixelMask> {
        let r = self.render(view)?;
        let (w, h) = (r.depth.width, r.depth.height);
        let mut counts = vec![0usize; self.scene.objects.len()];
        for v in bbox.min_v..bbox.max_v.min(h) {
            for u in bbox.min_u..bbox.max_u.min(w) {
                if let Surface::Object(i) = r.surface(u, v) {
                    counts[i] += 1;
                }
            }
        }
        let (obj, &n) = counts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .ok_or_else(|| BackendError::NotFound("scene has no objects".into()))?;
        if n == 0 {
            return Err(BackendError::NotFound(format!("no object inside the box in view {view}")));
        }
        Ok(r.mask_where(|s| s == Surface::Object(obj)).restricted_to(|u, v| bbox.contains(u, v)))
    }

    fn select_arrow(&self, situated: &ArrowOverlay, canonical: &ArrowOverlay, query: &str) -> Result<usize> {
        same_candidates(situated, canonical)?;
        Ok(ranked(&self.arrow_errors(situated, query)?)[0])
    }
}

/// Oracle whose arrow choice drops to the runner-up with probability `p`.
/// The coin is seeded from the call's inputs, so repeated calls agree.
#[derive(Debug, Clone)]
pub struct NoisyOracleVision {
    inner: OracleVision,
    p: f64,
    seed: u64,
}

impl NoisyOracleVision {
    pub fn new(inner: OracleVision, p: f64, seed: u64) -> Self {
        Self { inner, p: p.clamp(0.0, 1.0), seed }
    }

    fn coin(&self, overlay: &ArrowOverlay, query: &str) -> bool {
        let mut h = DefaultHasher::new();
        self.seed.hash(&mut h);
        query.hash(&mut h);
        for v in &overlay.candidates.vectors {
            for c in v.iter() {
                c.to_bits().hash(&mut h);
            }
        }
        ChaCha8Rng::seed_from_u64(h.finish()).random_bool(self.p)
    }
}

impl VisionBackend for NoisyOracleVision {
    fn select_view(&self, views: &[usize], description: &str) -> Result<Option<usize>> {
        self.inner.select_view(views, description)
    }

    fn detect_object(&self, view: usize, description: &str) -> Result<Detection> {
        self.inner.detect_object(view, description)
    }

    fn segment(&self, view: usize, bbox: &BoundingBox) -> Result<PixelMask> {
        self.inner.segment(view, bbox)
    }

    fn select_arrow(&self, situated: &ArrowOverlay, canonical: &ArrowOverlay, query: &str) -> Result<usize> {
        same_candidates(situated, canonical)?;
        let order = ranked(&self.inner.arrow_errors(situated, query)?);
        if order.len() > 1 && self.coin(situated, query) {
            return Ok(order[1]);
        }
        Ok(order[0])
    }
}

/// Reconstruction read straight from the scene: exact poses, rendered depth
/// and exact floor masks. `ImageRef::index` names the scene camera.
#[derive(Debug, Clone)]
pub struct SyntheticProvider {
    scene: Arc<SyntheticScene>,
    floor_confidence: f64,
}

impl SyntheticProvider {
    pub fn new(scene: impl Into<Arc<SyntheticScene>>) -> Self {
        Self { scene: scene.into(), floor_confidence: 1.0 }
    }

    pub fn with_floor_confidence(mut self, confidence: f64) -> Self {
        self.floor_confidence = confidence;
        self
    }
}

impl ReconstructionProvider for SyntheticProvider {
    fn reconstruct(&self, images: &[ImageRef]) -> Result<ProviderOutput> {
        let mut out = ProviderOutput {
            intrinsics: Vec::new(),
            poses: Vec::new(),
            depths: Vec::new(),
            floor_masks: Some(Vec::new()),
            floor_confidence: self.floor_confidence,
        };
        for img in images {
            let cam = self
                .scene
                .cameras
                .get(img.index)
                .ok_or_else(|| BackendError::NotFound(format!("scene has no camera {}", img.index)))?;
            let render = self.scene.rendered(img.index).map_err(|e| BackendError::Precondition(e.to_string()))?;
            out.intrinsics.push(cam.intrinsics);
            out.poses.push(cam.pose);
            out.depths.push(render_depth(&self.scene, img.index).map_err(|e| BackendError::Precondition(e.to_string()))?);
            out.floor_masks.as_mut().expect("set above").push(render.ground_mask());
        }
        Ok(out)
    }
}
