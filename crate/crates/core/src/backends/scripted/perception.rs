use std::collections::BTreeSet;
use std::fmt::Write;

use crate::backends::{BackendError, ChatBackend, ChatReply, ChatTurn, Result};
use crate::keys::{self, KeyKind};
use crate::scene_sim::{Calibration, QuestionIntent};

use super::{requested_key, TaggedPrompt};

/// Perception agent that writes the full extraction program on the opening
/// directive and a targeted program for any request carrying a key marker.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedPerception;

fn ext_var(view: usize) -> String {
    format!("ext_view{view}")
}

fn heading_var(object: &str) -> String {
    format!("heading_{}", keys::object_var(object))
}

/// Program text plus the variables it has bound so far.
struct Writer {
    out: String,
    bound: BTreeSet<String>,
}

impl Writer {
    fn new(env: &str) -> Self {
        let bound = env.split(", ").filter_map(|e| e.split_once(':')).map(|(n, _)| n.trim().to_string()).collect();
        Self { out: String::new(), bound }
    }

    fn line(&mut self, text: impl AsRef<str>) {
        self.out.push_str(text.as_ref());
        self.out.push('\n');
    }

    fn assign(&mut self, var: &str, call: &str) {
        self.line(format!("{var} = {call}"));
        self.bound.insert(var.to_string());
    }

    fn emit(&mut self, key: &str, expr: &str) {
        let _ = writeln!(self.out, "emit {key:?} {expr}");
    }

    fn object(&mut self, name: &str) -> String {
        let var = keys::object_var(name);
        if !self.bound.contains(&var) {
            self.assign(&var, &format!("perception.locate_object({name:?})"));
        }
        var
    }

    fn extrinsic(&mut self, view: usize) -> String {
        let var = ext_var(view);
        if !self.bound.contains(&var) {
            self.assign(&var, &format!("perception.extrinsic({view})"));
        }
        var
    }

    fn heading(&mut self, object: &str) -> String {
        let var = heading_var(object);
        if !self.bound.contains(&var) {
            let query = format!("the facing direction of the {object}");
            self.assign(&var, &format!("perception.ground_direction({query:?}, {object:?})"));
        }
        var
    }
}

fn full_extraction(w: &mut Writer, objects: &[String], views: usize) {
    w.line("# scene-wide extraction");
    w.assign("recon", "perception.reconstruct()");
    w.assign("up", "perception.ground_normal(recon)");
    w.emit(keys::GROUND_NORMAL, "up");
    for name in objects {
        let var = keys::object_var(name);
        w.assign(&var, &format!("perception.locate_object(recon, {name:?})"));
        w.emit(&keys::position(name), &var);
    }
    for (i, a) in objects.iter().enumerate() {
        for b in &objects[i + 1..] {
            let call = format!("perception.distance({}, {})", keys::object_var(a), keys::object_var(b));
            w.emit(&keys::distance(a, b), &call);
        }
    }
    for v in 0..views {
        let var = ext_var(v);
        w.assign(&var, &format!("perception.extrinsic(recon, {v})"));
        w.emit(&keys::extrinsic(v), &var);
    }
    for v in 1..views {
        let call = format!("perception.relative_camera_movement({}, {})", ext_var(v - 1), ext_var(v));
        w.emit(&keys::motion(v - 1, v), &call);
    }
    for name in objects {
        for v in 0..views {
            let call = format!("perception.relative_object_position({}, {})", ext_var(v), keys::object_var(name));
            w.emit(&keys::relative_position(name, v), &call);
        }
    }
}

fn targeted(w: &mut Writer, key: &str, intent: Option<&QuestionIntent>) -> Result<()> {
    let kind = keys::parse(key).ok_or_else(|| BackendError::RuleMiss(format!("unknown key '{key}'")))?;
    match kind {
        KeyKind::GroundNormal => {
            w.assign("up", "perception.ground_normal()");
            w.emit(key, "up");
        }
        KeyKind::Position(o) => {
            let var = w.object(&o);
            w.emit(key, &var);
        }
        KeyKind::Distance(a, b) => {
            let (va, vb) = (w.object(&a), w.object(&b));
            w.emit(key, &format!("perception.distance({va}, {vb})"));
        }
        KeyKind::Extrinsic(v) => {
            let var = w.extrinsic(v);
            w.emit(key, &var);
        }
        KeyKind::Motion(i, j) => {
            let (a, b) = (w.extrinsic(i), w.extrinsic(j));
            w.emit(key, &format!("perception.relative_camera_movement({a}, {b})"));
        }
        KeyKind::RelativePosition(o, v) => {
            let (e, p) = (w.extrinsic(v), w.object(&o));
            w.emit(key, &format!("perception.relative_object_position({e}, {p})"));
        }
        KeyKind::Compass { target, anchor } => {
            let Some(QuestionIntent::Direction { calibration, .. }) = intent else {
                return Err(BackendError::RuleMiss(format!("no compass premise for '{key}'")));
            };
            let frame = match calibration {
                Calibration::Object { anchor: a, target: t, label } => {
                    let (va, vt) = (w.object(a), w.object(t));
                    format!("perception.calibrate_frame({va}, {vt}, {:?})", label.name())
                }
                Calibration::Camera { view, label } => {
                    w.assign(&format!("cam_view{view}"), &format!("perception.camera_center({view})"));
                    w.assign(&format!("ahead_view{view}"), &format!("perception.view_heading_point({view})"));
                    format!("perception.calibrate_frame(cam_view{view}, ahead_view{view}, {:?})", label.name())
                }
            };
            w.assign("frame", &frame);
            let (va, vt) = (w.object(&anchor), w.object(&target));
            w.emit(key, &format!("perception.direction_label(frame, {va}, {vt}, 4)"));
        }
        KeyKind::FacingDir(o) => {
            let var = w.heading(&o);
            w.emit(key, &var);
        }
        KeyKind::Egocentric { target, observer } => {
            let h = w.heading(&observer);
            let (vo, vt) = (w.object(&observer), w.object(&target));
            w.emit(key, &format!("perception.egocentric_label({h}, {vo}, {vt})"));
        }
    }
    Ok(())
}

impl ChatBackend for ScriptedPerception {
    fn chat(&self, history: &[ChatTurn]) -> Result<ChatReply> {
        let prompt = TaggedPrompt::find(history, "perception", "<request>")?;
        let request = prompt.tag("request").unwrap_or_default();
        let views = prompt.tag("images").and_then(|s| s.parse::<usize>().ok()).unwrap_or(0);
        let mut w = Writer::new(prompt.tag("environment").unwrap_or_default());
        if let Some(key) = requested_key(request) {
            w.line(format!("# {request}"));
            targeted(&mut w, key, prompt.intent.as_ref())?;
        } else if request.starts_with("Extract all") {
            let objects = prompt.intent.as_ref().map(QuestionIntent::objects).unwrap_or_default();
            full_extraction(&mut w, &objects, views);
        } else {
            return Err(BackendError::RuleMiss(format!("unrecognized request '{request}'")));
        }
        Ok(ChatReply::new(format!("```\n{}```", w.out)))
    }
}
