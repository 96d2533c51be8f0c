use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backends::{ChatBackend, ChatTurn};
use crate::dsl::{execute, parse_in_scope, Environment, ExecutionLog, ToolRegistry};

use super::prompts::{extract_program, format_choices, render};
use super::{AgentError, EpisodeConfig, InformationSet, Question};

/// One program the perception agent proposed within a turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaAttempt {
    pub reply: String,
    pub program: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaTurn {
    pub request: String,
    pub attempts: Vec<PaAttempt>,
    /// Text of the program whose effects were kept, if any ran cleanly.
    pub program: Option<String>,
    pub log: ExecutionLog,
    pub emitted_keys: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Set when the failure came from the chat backend rather than the program.
    pub backend_failed: bool,
    pub model_ms: f64,
    pub tool_ms: f64,
}

/// Short listing of the variables a program may reuse.
fn describe_env(env: &Environment) -> String {
    if env.is_empty() {
        return "(no variables)".into();
    }
    env.names().map(|n| format!("{n}: {}", env.get(n).map_or("?", |v| v.kind_name()))).collect::<Vec<_>>().join(", ")
}

/// One perception turn. Each attempt runs against a copy of `env`; only a
/// program that parses and executes without error is committed, so a failed
/// turn leaves both `set` and `env` untouched.
#[allow(clippy::too_many_arguments)]
pub fn pa_turn(
    request: &str,
    set: &mut InformationSet,
    env: &mut Environment,
    question: &Question,
    images: &[Vec<u8>],
    image_count: usize,
    chat: &dyn ChatBackend,
    registry: &mut dyn ToolRegistry,
    config: &EpisodeConfig,
) -> PaTurn {
    let prompts = &config.prompts;
    let mut base = env.clone();
    base.begin_turn();
    let mut user = ChatTurn::user(render(
        &prompts.pa_turn,
        &[
            ("question", &question.text),
            ("choices", &format_choices(&question.choices)),
            ("image_count", &image_count.to_string()),
            ("information_set", &set.render()),
            ("environment", &describe_env(&base)),
            ("request", request),
        ],
    ));
    user.images = images.to_vec();
    let mut history = vec![ChatTurn::system(prompts.pa_system.clone()), user];

    let mut turn = PaTurn {
        request: request.to_string(),
        attempts: Vec::new(),
        program: None,
        log: ExecutionLog::default(),
        emitted_keys: Vec::new(),
        error: None,
        backend_failed: false,
        model_ms: 0.0,
        tool_ms: 0.0,
    };
    let max_attempts = config.pa_repair_retries + 1;
    let mut last = String::new();
    for _ in 0..max_attempts {
        let start = Instant::now();
        let reply = chat.chat(&history);
        turn.model_ms += start.elapsed().as_secs_f64() * 1e3;
        let reply = match reply {
            Ok(r) => r.text,
            Err(e) => {
                turn.error = Some(AgentError::Backend(e.to_string()).to_string());
                turn.backend_failed = true;
                return turn;
            }
        };
        let program_text = extract_program(&reply);
        let mut attempt = PaAttempt { reply: reply.clone(), program: program_text.clone(), diagnostic: None };
        let diagnostic = match parse_in_scope(&program_text, base.names()) {
            Err(e) => e.to_string(),
            Ok(program) => {
                let mut scratch = base.clone();
                let start = Instant::now();
                let result = execute(&program, &mut scratch, registry);
                turn.tool_ms += start.elapsed().as_secs_f64() * 1e3;
                turn.log = result.log;
                match result.error {
                    None => {
                        set.merge(&result.emitted);
                        turn.emitted_keys = result.emitted.iter().map(|e| e.key.clone()).collect();
                        turn.program = Some(program_text);
                        turn.attempts.push(attempt);
                        *env = scratch;
                        return turn;
                    }
                    Some(e) => e.to_string(),
                }
            }
        };
        attempt.diagnostic = Some(diagnostic.clone());
        turn.attempts.push(attempt);
        history.push(ChatTurn::assistant(reply));
        history.push(ChatTurn::user(render(&prompts.pa_repair, &[("diagnostic", &diagnostic)])));
        last = diagnostic;
    }
    turn.error = Some(AgentError::PaExhaustedRetries { attempts: max_attempts, last }.to_string());
    turn
}
