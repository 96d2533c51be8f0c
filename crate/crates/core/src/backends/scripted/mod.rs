//! Deterministic rule-table chat backends for both agents. They read the
//! tagged prompt protocol, recover the question's intent and reply the way a
//! perfectly disciplined agent would. Prompts they cannot interpret raise
//! `RuleMiss`.

mod perception;
mod reasoner;

pub use perception::ScriptedPerception;
pub use reasoner::{DistractibleReasoner, ScriptedReasoner};

use crate::agents::prompts::{parse_choices, tag_content};
use crate::scene_sim::{parse_question, Choice, QuestionIntent};

use super::{BackendError, ChatTurn, Result, Role};

/// Marker that scripted requests carry so the perception side knows which
/// key to produce.
pub(crate) fn key_marker(key: &str) -> String {
    format!("(key: {key})")
}

pub(crate) fn requested_key(request: &str) -> Option<&str> {
    let start = request.rfind("(key: ")? + "(key: ".len();
    let end = request[start..].find(')')? + start;
    Some(&request[start..end])
}

/// The tagged prompt a scripted backend answers: the latest user turn that
/// carries `marker`, so repair turns resolve to the original request.
struct TaggedPrompt<'a> {
    text: &'a str,
    choices: Vec<Choice>,
    intent: Option<QuestionIntent>,
}

impl<'a> TaggedPrompt<'a> {
    fn find(history: &'a [ChatTurn], role: &str, marker: &str) -> Result<Self> {
        let role_tag = format!("<role>{role}</role>");
        let text = history
            .iter()
            .rev()
            .filter(|t| t.role == Role::User)
            .map(|t| t.text.as_str())
            .find(|t| t.contains(&role_tag) && t.contains(marker))
            .ok_or_else(|| BackendError::RuleMiss(format!("no {role} prompt with {marker}")))?;
        let question = tag_content(text, "question").unwrap_or_default().to_string();
        let choices = parse_choices(tag_content(text, "choices").unwrap_or_default());
        let intent = parse_question(&question, &choices);
        Ok(Self { text, choices, intent })
    }

    fn tag(&self, tag: &str) -> Option<&'a str> {
        tag_content(self.text, tag)
    }
}
