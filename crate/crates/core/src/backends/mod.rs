//! Model providers behind narrow traits: chat for agent turns, vision for
//! view selection / detection / segmentation / arrow selection, and
//! reconstruction. Scripted and oracle implementations drive tests; the HTTP
//! client talks to hosted chat-completion endpoints.

mod http;
mod oracle;
mod recording;
pub mod scripted;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CameraIntrinsics, CameraPose, DepthMap, PixelMask};
use crate::perception::ArrowOverlay;

pub use http::{HttpChatBackend, HttpChatConfig};
pub use oracle::{NoisyOracleVision, OracleVision, SyntheticProvider};
pub use recording::RecordingChat;
pub use scripted::{DistractibleReasoner, ScriptedPerception, ScriptedReasoner};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("request timed out after {0} ms")]
    Timeout(u64),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("no scripted rule matches the prompt: {0}")]
    RuleMiss(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, BackendError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: Role,
    pub text: String,
    /// PNG-encoded attachments.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<Vec<u8>>,
}

impl ChatTurn {
    pub fn system(text: impl Into<String>) -> Self {
        Self { role: Role::System, text: text.into(), images: Vec::new() }
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self { role: Role::User, text: text.into(), images: Vec::new() }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self { role: Role::Assistant, text: text.into(), images: Vec::new() }
    }

    pub fn is_valid(&self) -> bool {
        !self.text.trim().is_empty() || !self.images.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatReply {
    pub text: String,
    /// Transport-level retries spent on this call.
    pub retries: u32,
}

impl ChatReply {
    pub fn new(text: impl Into<String>) -> Self {
        Self { text: text.into(), retries: 0 }
    }
}

pub trait ChatBackend: Send + Sync {
    fn chat(&self, history: &[ChatTurn]) -> Result<ChatReply>;
}

pub(crate) fn check_history(history: &[ChatTurn]) -> Result<()> {
    if history.is_empty() {
        return Err(BackendError::Precondition("empty chat history".into()));
    }
    if let Some(i) = history.iter().position(|t| !t.is_valid()) {
        return Err(BackendError::Precondition(format!("turn {i} has neither text nor images")));
    }
    Ok(())
}

/// Axis-aligned pixel box, inclusive of `min`, exclusive of `max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_u: u32,
    pub min_v: u32,
    pub max_u: u32,
    pub max_v: u32,
}

impl BoundingBox {
    pub fn contains(&self, u: u32, v: u32) -> bool {
        u >= self.min_u && u < self.max_u && v >= self.min_v && v < self.max_v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub confidence: f64,
}

pub trait VisionBackend: Send + Sync {
    /// View that best shows the described object, or `None` if none does.
    fn select_view(&self, views: &[usize], description: &str) -> Result<Option<usize>>;
    /// Errors with `NotFound` when the object is not in the view.
    fn detect_object(&self, view: usize, description: &str) -> Result<Detection>;
    fn segment(&self, view: usize, bbox: &BoundingBox) -> Result<PixelMask>;
    /// Zero-based index of the chosen arrow. Callers validate the range.
    fn select_arrow(&self, situated: &ArrowOverlay, canonical: &ArrowOverlay, query: &str) -> Result<usize>;
}

/// One input image: a position in the episode's view list plus an optional
/// file for providers that read real images.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl ImageRef {
    pub fn indexed(count: usize) -> Vec<ImageRef> {
        (0..count).map(|index| ImageRef { index, path: None }).collect()
    }
}

/// Raw per-view estimates from a reconstruction model.
#[derive(Debug, Clone, PartialEq)]
pub struct ProviderOutput {
    pub intrinsics: Vec<CameraIntrinsics>,
    pub poses: Vec<CameraPose>,
    pub depths: Vec<DepthMap>,
    /// Per-view floor segmentation, if the provider detects floors.
    pub floor_masks: Option<Vec<PixelMask>>,
    pub floor_confidence: f64,
}

pub trait ReconstructionProvider: Send + Sync {
    fn reconstruct(&self, images: &[ImageRef]) -> Result<ProviderOutput>;
}
