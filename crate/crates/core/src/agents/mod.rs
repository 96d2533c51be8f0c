//! The perception/reasoning loop: the perception agent writes programs that
//! grow an information set; the reasoning agent prunes it against a plan and
//! either asks for one more fact or answers from what is left.

mod ablation;
mod episode;
mod info_set;
mod pa;
pub mod prompts;
mod ra;
mod tools;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::ChatBackend;
use crate::scene_sim::{Choice, GeneratedQuestion};

pub use ablation::{minimality_ablation, AblationRow, AblationTable};
pub use episode::{run_episode, EpisodeInput, EpisodeTrace, ForcedReason, IterationRecord, PhaseTimings};
pub use info_set::{InformationItem, InformationSet, ItemStatus};
pub use pa::{pa_turn, PaAttempt, PaTurn};
pub use prompts::PromptSet;
pub use ra::{ra_answer, ra_curate, ra_decide, Curation, Decision, RaDecision};
pub use tools::{PerceptionTools, MODULE as PERCEPTION_MODULE, OPERATIONS as PERCEPTION_OPERATIONS};

/// The directive that opens every episode.
pub const INITIAL_REQUEST: &str =
    "Extract all potentially relevant information about the objects, the cameras and their spatial relations.";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("perception agent produced no runnable program after {attempts} attempts: {last}")]
    PaExhaustedRetries { attempts: u32, last: String },
    #[error("chat backend failed: {0}")]
    Backend(String),
    #[error("need at least one episode solved in exactly three iterations")]
    InsufficientEpisodes,
    #[error("prompt template: {0}")]
    Template(String),
}

/// A multiple-choice question as the agents see it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    pub choices: Vec<Choice>,
    /// Ground truth label, when known; never shown to the agents.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

impl Question {
    /// Label of the first choice, used when no valid answer was produced.
    pub fn fallback_label(&self) -> String {
        self.choices.iter().map(|c| c.label.clone()).min().unwrap_or_default()
    }

    pub fn has_label(&self, label: &str) -> bool {
        self.choices.iter().any(|c| c.label == label)
    }
}

impl From<&GeneratedQuestion> for Question {
    fn from(q: &GeneratedQuestion) -> Self {
        Self {
            id: q.id.clone(),
            text: q.text.clone(),
            choices: q.choices.clone(),
            answer: Some(q.answer.clone()),
            category: Some(q.category.as_str().to_string()),
        }
    }
}

/// Chat backends for the two roles. They may be the same backend.
#[derive(Clone)]
pub struct AgentBackends {
    pub perception: Arc<dyn ChatBackend>,
    pub reasoning: Arc<dyn ChatBackend>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    pub max_iterations: u32,
    pub pa_repair_retries: u32,
    pub curation_retries: u32,
    pub decide_retries: u32,
    pub rng_seed: u64,
    pub prompts: Arc<PromptSet>,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            max_iterations: 4,
            pa_repair_retries: 2,
            curation_retries: 2,
            decide_retries: 1,
            rng_seed: 0,
            prompts: Arc::new(PromptSet::default()),
        }
    }
}
