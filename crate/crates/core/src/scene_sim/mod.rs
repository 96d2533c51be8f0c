//! Synthetic scenes with analytic depth, used as the desk-scale stand-in for
//! real reconstructions and benchmarks.
//!
//! The floor is the plane `y = 0` with up `(0, -1, 0)`; objects sit at
//! negative `y`. Boxes are axis-aligned.

mod questions;
mod render;
mod spec;

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{project_point, CameraIntrinsics, CameraPose, GroundPlane, Mat3, Vec3};

pub use questions::{
    generate_question_set, motion_label, parse_question, Calibration, Category, Choice, GeneratedQuestion,
    QuestionIntent, MOTION_BUCKET_DEG,
};
pub use render::{render_depth, render_point_splat, render_view, RenderedView, SplatImage, Surface, DEFAULT_SPLAT_RADIUS};
pub use spec::{build_scene, random_scene_spec, CameraSpec, ImageSpec, ObjectSpec, RandomSceneConfig, SceneSpec, ShapeKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("unknown object '{0}'")]
    UnknownObject(String),
    #[error("view index {0} out of range")]
    BadView(usize),
    #[error("scene cannot support question generation: {0}")]
    InsufficientScene(String),
    #[error("point cloud is empty")]
    EmptyCloud,
}

pub type Result<T> = std::result::Result<T, SceneError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    Box { half_extents: Vec3 },
    Sphere { radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub name: String,
    pub shape: Shape,
    pub center: Vec3,
    /// Intrinsic front, parallel to the ground.
    pub facing: Option<Vec3>,
}

impl SceneObject {
    /// Radius of the ground footprint around the center.
    pub fn footprint_radius(&self) -> f64 {
        match self.shape {
            Shape::Box { half_extents: h } => (h.x * h.x + h.z * h.z).sqrt(),
            Shape::Sphere { radius } => radius,
        }
    }

    /// Radius of a ball around the center containing the whole object.
    pub fn bounding_radius(&self) -> f64 {
        match self.shape {
            Shape::Box { half_extents: h } => h.norm(),
            Shape::Sphere { radius } => radius,
        }
    }

    fn lowest_point_y(&self) -> f64 {
        // Largest y is closest to the floor since up is -y.
        match self.shape {
            Shape::Box { half_extents: h } => self.center.y + h.y,
            Shape::Sphere { radius } => self.center.y + radius,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneCamera {
    pub intrinsics: CameraIntrinsics,
    pub pose: CameraPose,
}

/// Immutable synthetic scene. Renders are computed lazily and cached.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub objects: Vec<SceneObject>,
    pub ground: GroundPlane,
    pub cameras: Vec<SceneCamera>,
    pub rng_seed: u64,
    renders: Vec<OnceLock<Arc<RenderedView>>>,
}

impl PartialEq for SyntheticScene {
    fn eq(&self, other: &Self) -> bool {
        self.objects == other.objects
            && self.ground == other.ground
            && self.cameras == other.cameras
            && self.rng_seed == other.rng_seed
    }
}

const OVERLAP_EPS: f64 = 1e-9;

impl SyntheticScene {
    /// Validates and assembles a scene.
    pub fn from_parts(objects: Vec<SceneObject>, cameras: Vec<SceneCamera>, rng_seed: u64) -> Result<Self> {
        let invalid = |m: String| Err(SceneError::InvalidSpec(m));
        if cameras.is_empty() {
            return invalid("at least one camera is required".into());
        }
        for cam in &cameras {
            cam.intrinsics.validate().map_err(|e| SceneError::InvalidSpec(e.to_string()))?;
        }
        let mut objects = objects;
        for (i, obj) in objects.iter_mut().enumerate() {
            if obj.name.trim().is_empty() {
                return invalid(format!("object {i} has an empty name"));
            }
            match obj.shape {
                Shape::Box { half_extents: h } if !(h.x > 0.0 && h.y > 0.0 && h.z > 0.0) => {
                    return invalid(format!("'{}' has non-positive extents", obj.name))
                }
                Shape::Sphere { radius } if !(radius > 0.0) => {
                    return invalid(format!("'{}' has non-positive radius", obj.name))
                }
                _ => {}
            }
            if !obj.center.iter().all(|x| x.is_finite()) {
                return invalid(format!("'{}' has a non-finite center", obj.name));
            }
            if obj.lowest_point_y() > OVERLAP_EPS {
                return invalid(format!("'{}' extends below the ground", obj.name));
            }
            if let Some(f) = obj.facing {
                if f.y.abs() > 1e-6 {
                    return invalid(format!("'{}' facing is not parallel to the ground", obj.name));
                }
                let Some(unit) = f.try_normalize(1e-9) else {
                    return invalid(format!("'{}' facing is zero", obj.name));
                };
                obj.facing = Some(unit);
            }
        }
        for i in 0..objects.len() {
            for j in (i + 1)..objects.len() {
                if objects[i].name == objects[j].name {
                    return invalid(format!("duplicate object name '{}'", objects[i].name));
                }
                if overlaps(&objects[i], &objects[j]) {
                    return invalid(format!("'{}' overlaps '{}'", objects[i].name, objects[j].name));
                }
            }
        }
        for obj in &objects {
            let seen = cameras.iter().any(|c| {
                project_point(&obj.center, &c.intrinsics, &c.pose)
                    .is_some_and(|(u, v, _)| c.intrinsics.contains(u, v))
            });
            if !seen {
                return invalid(format!("'{}' is not visible from any camera", obj.name));
            }
        }
        let renders = cameras.iter().map(|_| OnceLock::new()).collect();
        Ok(Self { objects, ground: GroundPlane::y_zero(), cameras, rng_seed, renders })
    }

    pub fn up(&self) -> Vec3 {
        self.ground.normal
    }

    pub fn object(&self, name: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.name == name)
    }

    pub fn object_index(&self, name: &str) -> Option<usize> {
        self.objects.iter().position(|o| o.name == name)
    }

    pub fn view_count(&self) -> usize {
        self.cameras.len()
    }

    /// Cached depth and surface labels for a view.
    pub fn rendered(&self, view: usize) -> Result<Arc<RenderedView>> {
        let slot = self.renders.get(view).ok_or(SceneError::BadView(view))?;
        Ok(slot.get_or_init(|| Arc::new(render::render_view_uncached(self, view))).clone())
    }

    /// Applies a ground-preserving rigid motion (rotation about the vertical
    /// axis plus an in-plane translation) to objects and cameras.
    pub fn transformed(&self, rotation: &Mat3, translation: &Vec3) -> Result<Self> {
        let up = self.up();
        if (rotation * up - up).norm() > 1e-9 || translation.dot(&up).abs() > 1e-9 {
            return Err(SceneError::InvalidSpec("transform must preserve the ground plane".into()));
        }
        let objects = self
            .objects
            .iter()
            .map(|o| SceneObject {
                name: o.name.clone(),
                shape: match o.shape {
                    Shape::Box { half_extents } => Shape::Box { half_extents: rotation.abs() * half_extents },
                    sphere => sphere,
                },
                center: rotation * o.center + translation,
                facing: o.facing.map(|f| rotation * f),
            })
            .collect::<Vec<_>>();
        // Boxes stay axis-aligned only for quarter turns; check that explicitly.
        let axis_aligned = rotation.iter().all(|x| x.abs() < 1e-9 || (x.abs() - 1.0).abs() < 1e-9);
        if !axis_aligned && objects.iter().any(|o| matches!(o.shape, Shape::Box { .. })) {
            return Err(SceneError::InvalidSpec("boxes require a quarter-turn rotation".into()));
        }
        let cameras = self
            .cameras
            .iter()
            .map(|c| SceneCamera {
                intrinsics: c.intrinsics,
                pose: CameraPose {
                    rotation: rotation * c.pose.rotation,
                    translation: rotation * c.pose.translation + translation,
                },
            })
            .collect();
        Self::from_parts(objects, cameras, self.rng_seed)
    }
}

fn overlaps(a: &SceneObject, b: &SceneObject) -> bool {
    match (a.shape, b.shape) {
        (Shape::Sphere { radius: ra }, Shape::Sphere { radius: rb }) => {
            (a.center - b.center).norm() < ra + rb - OVERLAP_EPS
        }
        (Shape::Box { half_extents: ha }, Shape::Box { half_extents: hb }) => {
            let d = (a.center - b.center).abs();
            d.x < ha.x + hb.x - OVERLAP_EPS && d.y < ha.y + hb.y - OVERLAP_EPS && d.z < ha.z + hb.z - OVERLAP_EPS
        }
        (Shape::Box { half_extents }, Shape::Sphere { radius }) => box_sphere(&a.center, &half_extents, &b.center, radius),
        (Shape::Sphere { radius }, Shape::Box { half_extents }) => box_sphere(&b.center, &half_extents, &a.center, radius),
    }
}

fn box_sphere(bc: &Vec3, h: &Vec3, sc: &Vec3, r: f64) -> bool {
    let d = sc - bc;
    let closest = Vec3::new(d.x.clamp(-h.x, h.x), d.y.clamp(-h.y, h.y), d.z.clamp(-h.z, h.z));
    (d - closest).norm() < r - OVERLAP_EPS
}

/// Center of the named object.
pub fn ground_truth_position(scene: &SyntheticScene, name: &str) -> Result<Vec3> {
    scene
        .object(name)
        .map(|o| o.center)
        .ok_or_else(|| SceneError::UnknownObject(name.to_string()))
}
