//! Naming scheme for information-set keys. Question generation, the scripted
//! agents and the annotation exporter all agree on these strings.

pub const GROUND_NORMAL: &str = "ground_normal";

pub fn position(object: &str) -> String {
    format!("pos:{object}")
}

/// Unordered pair; names are sorted so either argument order yields one key.
pub fn distance(a: &str, b: &str) -> String {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    format!("dist:{lo}|{hi}")
}

pub fn extrinsic(view: usize) -> String {
    format!("extrinsic:view{view}")
}

pub fn motion(from: usize, to: usize) -> String {
    format!("motion:view{from}->view{to}")
}

pub fn relative_position(object: &str, view: usize) -> String {
    format!("relpos:{object}@view{view}")
}

/// Compass label of `target` as seen from `anchor`.
pub fn compass(target: &str, anchor: &str) -> String {
    format!("compass:{target}|{anchor}")
}

pub fn facing_dir(object: &str) -> String {
    format!("facing_dir_{object}")
}

/// Position of `target` relative to the facing direction of `observer`.
pub fn egocentric(target: &str, observer: &str) -> String {
    format!("egorel:{target}|{observer}")
}

/// Turns an object name into a DSL identifier (`red chair` -> `obj_red_chair`).
pub fn object_var(object: &str) -> String {
    let mut out = String::from("obj_");
    for ch in object.chars() {
        out.push(if ch.is_ascii_alphanumeric() { ch.to_ascii_lowercase() } else { '_' });
    }
    out
}

/// Parsed form of a key produced by this module.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KeyKind {
    GroundNormal,
    Position(String),
    Distance(String, String),
    Extrinsic(usize),
    Motion(usize, usize),
    RelativePosition(String, usize),
    Compass { target: String, anchor: String },
    FacingDir(String),
    Egocentric { target: String, observer: String },
}

pub fn parse(key: &str) -> Option<KeyKind> {
    if key == GROUND_NORMAL {
        return Some(KeyKind::GroundNormal);
    }
    if let Some(rest) = key.strip_prefix("facing_dir_") {
        return Some(KeyKind::FacingDir(rest.to_string()));
    }
    let (kind, rest) = key.split_once(':')?;
    let view_index = |s: &str| s.strip_prefix("view")?.parse::<usize>().ok();
    match kind {
        "pos" => Some(KeyKind::Position(rest.to_string())),
        "dist" => rest.split_once('|').map(|(a, b)| KeyKind::Distance(a.into(), b.into())),
        "extrinsic" => view_index(rest).map(KeyKind::Extrinsic),
        "motion" => {
            let (a, b) = rest.split_once("->")?;
            Some(KeyKind::Motion(view_index(a)?, view_index(b)?))
        }
        "relpos" => {
            let (obj, view) = rest.rsplit_once('@')?;
            Some(KeyKind::RelativePosition(obj.into(), view_index(view)?))
        }
        "compass" => rest
            .split_once('|')
            .map(|(t, a)| KeyKind::Compass { target: t.into(), anchor: a.into() }),
        "egorel" => rest
            .split_once('|')
            .map(|(t, o)| KeyKind::Egocentric { target: t.into(), observer: o.into() }),
        _ => None,
    }
}
