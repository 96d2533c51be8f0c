use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::{Mat4, Vec3};
use crate::perception::DirectionCandidateSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HandleKind {
    Reconstruction,
    Frame,
}

/// Reference into the episode's resource table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Handle {
    pub kind: HandleKind,
    pub id: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Value {
    Number(f64),
    Str(String),
    Bool(bool),
    Vec3(Vec3),
    Matrix(Mat4),
    Label(String),
    Descriptors(BTreeMap<String, f64>),
    Candidates(DirectionCandidateSet),
    Handle(Handle),
    Absent,
    List(Vec<Value>),
}

impl Value {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Value::Number(_) => "number",
            Value::Str(_) => "string",
            Value::Bool(_) => "boolean",
            Value::Vec3(_) => "vector",
            Value::Matrix(_) => "matrix",
            Value::Label(_) => "label",
            Value::Descriptors(_) => "descriptors",
            Value::Candidates(_) => "candidates",
            Value::Handle(_) => "handle",
            Value::Absent => "absent",
            Value::List(_) => "list",
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(n) => Some(*n),
            _ => None,
        }
    }

    /// Strings and labels both read as text.
    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Str(s) | Value::Label(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_vec3(&self) -> Option<Vec3> {
        match self {
            Value::Vec3(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_descriptors(&self) -> Option<&BTreeMap<String, f64>> {
        match self {
            Value::Descriptors(d) => Some(d),
            _ => None,
        }
    }
}

fn num(x: f64) -> String {
    let s = format!("{x:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

/// Compact human-readable rendering used in prompts and logs.
impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(x) => f.write_str(&num(*x)),
            Value::Str(s) => write!(f, "{s:?}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Vec3(v) => write!(f, "({}, {}, {})", num(v.x), num(v.y), num(v.z)),
            Value::Matrix(m) => {
                f.write_str("[")?;
                for r in 0..4 {
                    if r > 0 {
                        f.write_str("; ")?;
                    }
                    let row: Vec<String> = (0..4).map(|c| num(m[(r, c)])).collect();
                    f.write_str(&row.join(" "))?;
                }
                f.write_str("]")
            }
            Value::Label(l) => f.write_str(l),
            Value::Descriptors(d) => {
                let parts: Vec<String> = d.iter().map(|(k, v)| format!("{k}: {}", num(*v))).collect();
                write!(f, "{{{}}}", parts.join(", "))
            }
            Value::Candidates(c) => write!(f, "<{} {:?} candidates>", c.vectors.len(), c.stage),
            Value::Handle(h) => write!(f, "<{:?} #{}>", h.kind, h.id),
            Value::Absent => f.write_str("absent"),
            Value::List(items) => {
                f.write_str("[")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
        }
    }
}
