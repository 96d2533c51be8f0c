use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backends::{ChatBackend, ChatTurn};

use super::prompts::{format_choices, render, tag_content};
use super::{AgentError, EpisodeConfig, InformationSet, Question};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<String>,
    pub kept: Vec<String>,
    pub pruned: Vec<String>,
    pub messages: Vec<ChatTurn>,
    pub warnings: Vec<String>,
    /// Chat backend failures.
    pub errors: Vec<String>,
    pub model_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Decision {
    Request { text: String },
    Decide { rationale: String },
}

/// Outcome of the decision step. A decide carries the answer produced in a
/// fresh context; `fallback` marks an answer that no reply supported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaDecision {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<Decision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    pub fallback: bool,
    pub messages: Vec<ChatTurn>,
    pub warnings: Vec<String>,
    pub errors: Vec<String>,
    pub model_ms: f64,
}

fn question_vars<'a>(question: &'a Question, choices: &'a str, set: &'a str) -> Vec<(&'static str, &'a str)> {
    vec![("question", question.text.as_str()), ("choices", choices), ("information_set", set)]
}

/// Sends `history`, logging both sides into `messages`.
fn exchange(
    chat: &dyn ChatBackend,
    history: &[ChatTurn],
    messages: &mut Vec<ChatTurn>,
    model_ms: &mut f64,
) -> Result<String, AgentError> {
    if let Some(last) = history.last() {
        messages.push(last.clone());
    }
    let start = Instant::now();
    let reply = chat.chat(history);
    *model_ms += start.elapsed().as_secs_f64() * 1e3;
    let text = reply.map_err(|e| AgentError::Backend(e.to_string()))?.text;
    messages.push(ChatTurn::assistant(text.clone()));
    Ok(text)
}

/// Validates a keep-list against the active keys.
fn parse_keep(reply: &str, set: &InformationSet) -> Result<Vec<String>, String> {
    let block = tag_content(reply, "Keep").ok_or("missing <Keep></Keep> block")?;
    let keys: Vec<String> = serde_json::from_str(block).map_err(|e| format!("keep-list is not a JSON array of strings: {e}"))?;
    let active = set.active_keys();
    if let Some(unknown) = keys.iter().find(|k| !active.contains(k)) {
        return Err(format!("keep-list names unknown key '{unknown}'"));
    }
    Ok(keys)
}

/// Plan-guided pruning. Items missing from the keep-list are marked pruned.
/// After the retry budget a malformed keep-list leaves the set as is.
pub fn ra_curate(set: &mut InformationSet, question: &Question, chat: &dyn ChatBackend, config: &EpisodeConfig) -> Curation {
    let mut out = Curation {
        plan: None,
        kept: set.active_keys(),
        pruned: Vec::new(),
        messages: Vec::new(),
        warnings: Vec::new(),
        errors: Vec::new(),
        model_ms: 0.0,
    };
    if set.is_empty() {
        return out;
    }
    let prompts = &config.prompts;
    let choices = format_choices(&question.choices);
    let rendered = set.render();
    let mut history = vec![
        ChatTurn::system(prompts.ra_system.clone()),
        ChatTurn::user(render(&prompts.ra_curate, &question_vars(question, &choices, &rendered))),
    ];
    for _ in 0..=config.curation_retries {
        let reply = match exchange(chat, &history, &mut out.messages, &mut out.model_ms) {
            Ok(r) => r,
            Err(e) => {
                out.errors.push(e.to_string());
                out.warnings.push("curation skipped".into());
                return out;
            }
        };
        match parse_keep(&reply, set) {
            Ok(keep) => {
                out.plan = tag_content(&reply, "Plan").map(str::to_string);
                out.pruned = set.retain_keys(&keep);
                out.kept = set.active_keys();
                return out;
            }
            Err(diagnostic) => {
                history.push(ChatTurn::assistant(reply));
                history.push(ChatTurn::user(render(&prompts.ra_repair, &[("diagnostic", &diagnostic)])));
            }
        }
    }
    out.warnings.push(format!(
        "no valid keep-list after {} attempts; nothing pruned",
        config.curation_retries + 1
    ));
    out
}

/// The earliest `<Request>` or `<Decide>` tag in a reply.
fn parse_decision(reply: &str) -> Result<Decision, String> {
    let body = |tag: &str| {
        let open = format!("<{tag}>");
        let start = reply.find(&open)? + open.len();
        let rest = &reply[start..];
        let end = rest.find(&format!("</{tag}>")).unwrap_or(rest.len());
        Some((start, rest[..end].trim().to_string()))
    };
    let decision = match (body("Request"), body("Decide")) {
        (Some((r, text)), Some((d, _))) if r < d => Decision::Request { text },
        (Some((_, text)), None) => Decision::Request { text },
        (_, Some((_, rationale))) => Decision::Decide { rationale },
        (None, None) => return Err("reply has neither a <Request> nor a <Decide> tag".into()),
    };
    match &decision {
        Decision::Request { text } if text.is_empty() => Err("empty request".into()),
        _ => Ok(decision),
    }
}

fn parse_answer(reply: &str, question: &Question) -> Result<String, String> {
    let label = tag_content(reply, "Answer").ok_or("missing <Answer></Answer> tag")?;
    if question.has_label(label) {
        Ok(label.to_string())
    } else {
        Err(format!("'{label}' is not one of the choice labels"))
    }
}

/// Asks for the answer label in a fresh context holding only the question
/// and the active items. `mode` is shown to the model (`answer` or
/// `forced`). Falls back to the lowest label when no reply is usable.
pub fn ra_answer(
    set: &InformationSet,
    question: &Question,
    chat: &dyn ChatBackend,
    config: &EpisodeConfig,
    mode: &str,
) -> RaDecision {
    let prompts = &config.prompts;
    let choices = format_choices(&question.choices);
    let rendered = set.render();
    let mut vars = question_vars(question, &choices, &rendered);
    vars.push(("mode", mode));
    let mut history = vec![ChatTurn::system(prompts.ra_system.clone()), ChatTurn::user(render(&prompts.ra_answer, &vars))];
    let mut out = RaDecision {
        decision: None,
        answer: None,
        fallback: false,
        messages: Vec::new(),
        warnings: Vec::new(),
        errors: Vec::new(),
        model_ms: 0.0,
    };
    for _ in 0..=config.decide_retries {
        let reply = match exchange(chat, &history, &mut out.messages, &mut out.model_ms) {
            Ok(r) => r,
            Err(e) => {
                out.errors.push(e.to_string());
                break;
            }
        };
        match parse_answer(&reply, question) {
            Ok(label) => {
                out.answer = Some(label);
                return out;
            }
            Err(diagnostic) => {
                out.warnings.push(diagnostic.clone());
                history.push(ChatTurn::assistant(reply));
                history.push(ChatTurn::user(render(&prompts.ra_repair, &[("diagnostic", &diagnostic)])));
            }
        }
    }
    out.answer = Some(question.fallback_label());
    out.fallback = true;
    out
}

/// Request-or-decide step over the curated set. A decide is followed by
/// [`ra_answer`]; a reply without a usable tag after the retry budget ends in
/// the lowest-label fallback.
pub fn ra_decide(
    set: &InformationSet,
    question: &Question,
    previous_requests: &[String],
    chat: &dyn ChatBackend,
    config: &EpisodeConfig,
) -> RaDecision {
    let prompts = &config.prompts;
    let choices = format_choices(&question.choices);
    let rendered = set.render();
    let requests = if previous_requests.is_empty() {
        "(none)".to_string()
    } else {
        previous_requests.iter().map(|r| format!("- {r}")).collect::<Vec<_>>().join("\n")
    };
    let mut vars = question_vars(question, &choices, &rendered);
    vars.push(("requests", &requests));
    let mut history = vec![ChatTurn::system(prompts.ra_system.clone()), ChatTurn::user(render(&prompts.ra_decide, &vars))];
    let mut out = RaDecision {
        decision: None,
        answer: None,
        fallback: false,
        messages: Vec::new(),
        warnings: Vec::new(),
        errors: Vec::new(),
        model_ms: 0.0,
    };
    for _ in 0..=config.decide_retries {
        let reply = match exchange(chat, &history, &mut out.messages, &mut out.model_ms) {
            Ok(r) => r,
            Err(e) => {
                out.errors.push(e.to_string());
                break;
            }
        };
        match parse_decision(&reply) {
            Ok(decision) => {
                let decide = matches!(decision, Decision::Decide { .. });
                out.decision = Some(decision);
                if decide {
                    let answer = ra_answer(set, question, chat, config, "answer");
                    out.answer = answer.answer;
                    out.fallback = answer.fallback;
                    out.messages.extend(answer.messages);
                    out.warnings.extend(answer.warnings);
                    out.errors.extend(answer.errors);
                    out.model_ms += answer.model_ms;
                }
                return out;
            }
            Err(diagnostic) => {
                out.warnings.push(diagnostic.clone());
                history.push(ChatTurn::assistant(reply));
                history.push(ChatTurn::user(render(&prompts.ra_repair, &[("diagnostic", &diagnostic)])));
            }
        }
    }
    out.answer = Some(question.fallback_label());
    out.fallback = true;
    out
}
