//! The perception toolbox exposed to programs as `perception.*`.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::backends::{ImageRef, ReconstructionProvider, VisionBackend};
use crate::dsl::{Handle, HandleKind, ToolError, ToolRegistry, Value};
use crate::geometry::{CameraPose, Extrinsic, Vec3};
use crate::labels::CompassLabel;
use crate::perception::{
    self, calibrate_frame, direction_label, egocentric_label, locate_object, relative_camera_movement,
    relative_object_position, sog_ground_direction, GroundConfig, GroundFrame, MovementDescriptors, PerceptionError,
    SceneReconstruction, DEFAULT_ARROW_LENGTH,
};

pub const MODULE: &str = "perception";

/// Operation names accepted by [`PerceptionTools`].
pub const OPERATIONS: [&str; 13] = [
    "reconstruct",
    "ground_normal",
    "locate_object",
    "extrinsic",
    "camera_center",
    "view_heading_point",
    "relative_camera_movement",
    "relative_object_position",
    "distance",
    "calibrate_frame",
    "direction_label",
    "ground_direction",
    "egocentric_label",
];

/// Episode-local registry. Reconstructions and compass frames live in its
/// resource table and are referenced from programs by handle.
pub struct PerceptionTools {
    images: Vec<ImageRef>,
    provider: Arc<dyn ReconstructionProvider>,
    vision: Arc<dyn VisionBackend>,
    pub ground: GroundConfig,
    pub arrow_length: f64,
    seed: u64,
    recons: Vec<SceneReconstruction>,
    frames: Vec<GroundFrame>,
    sog_calls: u64,
}

fn failed(e: PerceptionError) -> ToolError {
    ToolError::Failed(e.to_string())
}

fn type_err(what: &str, got: &Value) -> ToolError {
    ToolError::Type(format!("expected {what}, got {}", got.kind_name()))
}

fn arity(args: &[Value], allowed: &[usize]) -> Result<(), ToolError> {
    if allowed.contains(&args.len()) {
        return Ok(());
    }
    let expected = allowed.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" or ");
    Err(ToolError::Arity { expected, got: args.len() })
}

fn vec3(v: &Value) -> Result<Vec3, ToolError> {
    v.as_vec3().ok_or_else(|| type_err("a 3-vector", v))
}

fn text(v: &Value) -> Result<&str, ToolError> {
    v.as_text().ok_or_else(|| type_err("a string", v))
}

fn index(v: &Value) -> Result<usize, ToolError> {
    match v.as_number() {
        Some(n) if n >= 0.0 && n.fract() == 0.0 => Ok(n as usize),
        _ => Err(type_err("a view index", v)),
    }
}

fn extrinsic(v: &Value) -> Result<Extrinsic, ToolError> {
    match v {
        Value::Matrix(m) => Extrinsic::new(*m).map_err(|e| ToolError::Type(e.to_string())),
        other => Err(type_err("an extrinsic matrix", other)),
    }
}

fn descriptors(m: &MovementDescriptors) -> Value {
    let d: BTreeMap<String, f64> = [
        ("forward", m.forward),
        ("right", m.right),
        ("up", m.up),
        ("rotate_right", m.rotate_right),
        ("rotate_up", m.rotate_up),
        ("rotate_roll", m.rotate_roll),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    Value::Descriptors(d)
}

impl PerceptionTools {
    pub fn new(
        images: Vec<ImageRef>,
        provider: Arc<dyn ReconstructionProvider>,
        vision: Arc<dyn VisionBackend>,
        seed: u64,
    ) -> Self {
        Self {
            images,
            provider,
            vision,
            ground: GroundConfig::default(),
            arrow_length: DEFAULT_ARROW_LENGTH,
            seed,
            recons: Vec::new(),
            frames: Vec::new(),
            sog_calls: 0,
        }
    }

    fn reconstruct(&mut self) -> Result<u32, ToolError> {
        let r = perception::reconstruct(&self.images, self.provider.as_ref(), &self.ground).map_err(failed)?;
        self.recons.push(r);
        Ok(self.recons.len() as u32 - 1)
    }

    /// Splits an optional leading reconstruction handle off `args`. Without
    /// one, the latest reconstruction is used, built on first need.
    fn with_recon<'a>(&mut self, args: &'a [Value]) -> Result<(usize, &'a [Value]), ToolError> {
        if let Some(Value::Handle(h)) = args.first() {
            if h.kind == HandleKind::Reconstruction {
                let id = h.id as usize;
                if id >= self.recons.len() {
                    return Err(ToolError::Failed(format!("unknown reconstruction handle #{id}")));
                }
                return Ok((id, &args[1..]));
            }
        }
        if self.recons.is_empty() {
            self.reconstruct()?;
        }
        Ok((self.recons.len() - 1, args))
    }

    fn frame(&self, v: &Value) -> Result<&GroundFrame, ToolError> {
        match v {
            Value::Handle(Handle { kind: HandleKind::Frame, id }) => {
                self.frames.get(*id as usize).ok_or_else(|| ToolError::Failed(format!("unknown frame handle #{id}")))
            }
            other => Err(type_err("a frame handle", other)),
        }
    }

    fn view_pose(&mut self, args: &[Value]) -> Result<CameraPose, ToolError> {
        let (r, rest) = self.with_recon(args)?;
        arity(rest, &[1])?;
        let view = index(&rest[0])?;
        Ok(self.recons[r].view(view).map_err(failed)?.pose)
    }

    pub fn reconstructions(&self) -> &[SceneReconstruction] {
        &self.recons
    }
}

impl ToolRegistry for PerceptionTools {
    fn call(&mut self, module: &str, op: &str, args: &[Value]) -> Result<Value, ToolError> {
        if module != MODULE {
            return Err(ToolError::Unknown);
        }
        // Geometry over absent inputs stays absent instead of failing.
        let absent_in = args.iter().any(|a| *a == Value::Absent);
        match op {
            "reconstruct" => {
                arity(args, &[0])?;
                let id = self.reconstruct()?;
                Ok(Value::Handle(Handle { kind: HandleKind::Reconstruction, id }))
            }
            "ground_normal" => {
                let (r, rest) = self.with_recon(args)?;
                arity(rest, &[0])?;
                Ok(Value::Vec3(self.recons[r].up()))
            }
            "locate_object" => {
                let (r, rest) = self.with_recon(args)?;
                arity(rest, &[1])?;
                let found = locate_object(text(&rest[0])?, &self.recons[r], self.vision.as_ref()).map_err(failed)?;
                Ok(found.map_or(Value::Absent, |l| Value::Vec3(l.centroid)))
            }
            "extrinsic" => Ok(Value::Matrix(Extrinsic::from_pose(&self.view_pose(args)?).matrix)),
            "camera_center" => Ok(Value::Vec3(self.view_pose(args)?.center())),
            "view_heading_point" => {
                let pose = self.view_pose(args)?;
                Ok(Value::Vec3(pose.center() + pose.forward()))
            }
            "relative_camera_movement" => {
                arity(args, &[2])?;
                let m = relative_camera_movement(&extrinsic(&args[0])?, &extrinsic(&args[1])?).map_err(failed)?;
                Ok(descriptors(&m))
            }
            "relative_object_position" => {
                arity(args, &[2])?;
                if absent_in {
                    return Ok(Value::Absent);
                }
                Ok(descriptors(&relative_object_position(&extrinsic(&args[0])?, &vec3(&args[1])?)))
            }
            "distance" => {
                arity(args, &[2])?;
                if absent_in {
                    return Ok(Value::Absent);
                }
                Ok(Value::Number((vec3(&args[0])? - vec3(&args[1])?).norm()))
            }
            "calibrate_frame" => {
                let (r, rest) = self.with_recon(args)?;
                arity(rest, &[3])?;
                if rest.contains(&Value::Absent) {
                    return Ok(Value::Absent);
                }
                let label = text(&rest[2])?;
                let label = CompassLabel::parse(label).ok_or_else(|| ToolError::Type(format!("unknown compass label '{label}'")))?;
                let frame = calibrate_frame(&vec3(&rest[0])?, &vec3(&rest[1])?, label, &self.recons[r].ground).map_err(failed)?;
                self.frames.push(frame);
                Ok(Value::Handle(Handle { kind: HandleKind::Frame, id: self.frames.len() as u32 - 1 }))
            }
            "direction_label" => {
                arity(args, &[3, 4])?;
                if absent_in {
                    return Ok(Value::Absent);
                }
                let granularity = match args.get(3) {
                    Some(g) => g.as_number().filter(|n| n.fract() == 0.0 && *n >= 0.0).ok_or_else(|| type_err("4 or 8", g))? as u32,
                    None => 8,
                };
                let frame = *self.frame(&args[0])?;
                let label = direction_label(&frame, &vec3(&args[1])?, &vec3(&args[2])?, granularity).map_err(failed)?;
                Ok(Value::Label(label.name().into()))
            }
            "ground_direction" => {
                let (r, rest) = self.with_recon(args)?;
                arity(rest, &[2])?;
                let seed = self.seed.wrapping_add(self.sog_calls);
                self.sog_calls += 1;
                let out = sog_ground_direction(
                    text(&rest[0])?,
                    text(&rest[1])?,
                    &self.recons[r],
                    self.vision.as_ref(),
                    seed,
                    self.arrow_length,
                )
                .map_err(failed)?;
                Ok(Value::Vec3(out.direction))
            }
            "egocentric_label" => {
                arity(args, &[3])?;
                if absent_in {
                    return Ok(Value::Absent);
                }
                let up = self.recons.last().map_or_else(crate::geometry::default_up, |r| r.up());
                let (label, _) =
                    egocentric_label(&vec3(&args[0])?, &vec3(&args[1])?, &vec3(&args[2])?, &up).map_err(failed)?;
                Ok(Value::Label(label.phrase().into()))
            }
            _ => Err(ToolError::Unknown),
        }
    }
}
