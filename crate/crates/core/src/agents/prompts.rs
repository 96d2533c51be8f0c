//! Prompt templates and the tag protocol shared by the agents and the
//! scripted backends.

use std::path::Path;

use crate::scene_sim::Choice;

use super::AgentError;

/// Text templates with `{name}` placeholders. Defaults are compiled in;
/// [`PromptSet::load_dir`] overrides any of them from `<field>.txt` files.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSet {
    pub pa_system: String,
    pub pa_turn: String,
    pub pa_repair: String,
    pub ra_system: String,
    pub ra_curate: String,
    pub ra_decide: String,
    pub ra_answer: String,
    pub ra_repair: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            pa_system: include_str!("../../prompts/pa_system.txt").into(),
            pa_turn: include_str!("../../prompts/pa_turn.txt").into(),
            pa_repair: include_str!("../../prompts/pa_repair.txt").into(),
            ra_system: include_str!("../../prompts/ra_system.txt").into(),
            ra_curate: include_str!("../../prompts/ra_curate.txt").into(),
            ra_decide: include_str!("../../prompts/ra_decide.txt").into(),
            ra_answer: include_str!("../../prompts/ra_answer.txt").into(),
            ra_repair: include_str!("../../prompts/ra_repair.txt").into(),
        }
    }
}

const REQUIRED: [(&str, &[&str]); 8] = [
    ("pa_system", &[]),
    ("pa_turn", &["question", "choices", "information_set", "environment", "request"]),
    ("pa_repair", &["diagnostic"]),
    ("ra_system", &[]),
    ("ra_curate", &["question", "choices", "information_set"]),
    ("ra_decide", &["question", "choices", "information_set"]),
    ("ra_answer", &["question", "choices", "information_set"]),
    ("ra_repair", &["diagnostic"]),
];

impl PromptSet {
    fn field_mut(&mut self, name: &str) -> &mut String {
        match name {
            "pa_system" => &mut self.pa_system,
            "pa_turn" => &mut self.pa_turn,
            "pa_repair" => &mut self.pa_repair,
            "ra_system" => &mut self.ra_system,
            "ra_curate" => &mut self.ra_curate,
            "ra_decide" => &mut self.ra_decide,
            "ra_answer" => &mut self.ra_answer,
            _ => &mut self.ra_repair,
        }
    }

    /// Defaults overridden by whichever template files exist in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, AgentError> {
        let mut set = Self::default();
        for (name, needs) in REQUIRED {
            let path = dir.join(format!("{name}.txt"));
            if !path.exists() {
                continue;
            }
            let text = std::fs::read_to_string(&path)
                .map_err(|e| AgentError::Template(format!("{}: {e}", path.display())))?;
            if let Some(missing) = needs.iter().find(|p| !text.contains(&format!("{{{p}}}"))) {
                return Err(AgentError::Template(format!("{} lacks the {{{missing}}} placeholder", path.display())));
            }
            *set.field_mut(name) = text;
        }
        Ok(set)
    }
}

/// Substitutes `{name}` placeholders.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in vars {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}

/// Content between the first `<tag>` and the following `</tag>`.
pub fn tag_content<'a>(text: &'a str, tag: &str) -> Option<&'a str> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let start = text.find(&open)? + open.len();
    let end = text[start..].find(&close)? + start;
    Some(text[start..end].trim())
}

pub fn format_choices(choices: &[Choice]) -> String {
    choices.iter().map(|c| format!("{}. {}", c.label, c.text)).collect::<Vec<_>>().join("\n")
}

pub fn parse_choices(block: &str) -> Vec<Choice> {
    block
        .lines()
        .filter_map(|l| {
            let (label, text) = l.trim().split_once(". ")?;
            Some(Choice { label: label.trim().into(), text: text.trim().into() })
        })
        .collect()
}

/// `(key, value text)` pairs from an information-set block.
pub fn parse_info_lines(block: &str) -> Vec<(String, String)> {
    block
        .lines()
        .filter_map(|l| {
            let (k, v) = l.trim().strip_prefix("- ")?.split_once(" = ")?;
            Some((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

/// Program text from a reply: the first fenced block if there is one,
/// otherwise the whole reply.
pub fn extract_program(reply: &str) -> String {
    if let Some(start) = reply.find("```") {
        let after = &reply[start + 3..];
        // Skip a language tag such as ```dsl.
        let body = match after.split_once('\n') {
            Some((lang, rest)) if lang.trim().chars().all(char::is_alphanumeric) => rest,
            _ => after,
        };
        return body.split("```").next().unwrap_or(body).trim().to_string();
    }
    reply.trim().to_string()
}
