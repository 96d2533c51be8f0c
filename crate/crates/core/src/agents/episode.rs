use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dsl::{restore, snapshot, Environment, ExecutionLog, ToolRegistry};

use super::{
    pa_turn, ra_answer, ra_curate, ra_decide, AgentBackends, Decision, EpisodeConfig, InformationItem,
    InformationSet, Question, INITIAL_REQUEST,
};
use crate::backends::ChatTurn;

/// Why the episode answer did not come from a regular decide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForcedReason {
    /// The reasoner was still requesting when the iteration cap was reached.
    IterationCap,
    /// No usable decision or answer; the lowest label was used.
    Fallback,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    /// Chat calls made for the perception agent.
    pub perception_model_ms: f64,
    /// Tool execution inside perception programs.
    pub tool_ms: f64,
    pub curation_ms: f64,
    pub decision_ms: f64,
    pub total_ms: f64,
}

impl PhaseTimings {
    pub fn model_ms(&self) -> f64 {
        self.perception_model_ms + self.curation_ms + self.decision_ms
    }

    fn add(&mut self, other: &PhaseTimings) {
        self.perception_model_ms += other.perception_model_ms;
        self.tool_ms += other.tool_ms;
        self.curation_ms += other.curation_ms;
        self.decision_ms += other.decision_ms;
        self.total_ms += other.total_ms;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: u32,
    pub request: String,
    pub pa_replies: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program: Option<String>,
    pub log: ExecutionLog,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pa_error: Option<String>,
    /// Active items after perception, before curation.
    pub set_before: Vec<InformationItem>,
    /// Active items after curation.
    pub set_after: Vec<InformationItem>,
    pub pruned: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<String>,
    pub ra_messages: Vec<ChatTurn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<Decision>,
    pub warnings: Vec<String>,
    pub snapshot_bytes: usize,
    pub timings: PhaseTimings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub question: Question,
    pub iterations: Vec<IterationRecord>,
    pub final_answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forced: Option<ForcedReason>,
    /// Messages of the forced decide at the iteration cap.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub forced_messages: Vec<ChatTurn>,
    pub final_set: Vec<InformationItem>,
    pub timings: PhaseTimings,
    pub warnings: Vec<String>,
    /// Chat backend failures in any phase.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

impl EpisodeTrace {
    pub fn iteration_count(&self) -> u32 {
        self.iterations.len() as u32
    }

    pub fn is_correct(&self) -> Option<bool> {
        self.question.answer.as_ref().map(|a| *a == self.final_answer)
    }

    /// Requests the reasoner issued, in order.
    pub fn requests(&self) -> Vec<&str> {
        self.iterations
            .iter()
            .filter_map(|it| match &it.decision {
                Some(Decision::Request { text }) => Some(text.as_str()),
                _ => None,
            })
            .collect()
    }

    /// Copy with every wall-clock measurement zeroed.
    pub fn without_timings(&self) -> Self {
        let mut out = self.clone();
        out.timings = PhaseTimings::default();
        for it in &mut out.iterations {
            it.timings = PhaseTimings::default();
            it.log = it.log.without_timings();
        }
        out
    }
}

/// Everything an episode needs besides configuration and backends.
pub struct EpisodeInput<'a> {
    pub question: &'a Question,
    /// PNG attachments for the perception agent; may be empty for scripted
    /// backends.
    pub images: &'a [Vec<u8>],
    pub image_count: usize,
}

/// The perceive-curate-decide loop. Starts from an empty set and stops at the
/// first decide; at the iteration cap one forced answer is taken on the
/// current set. The DSL environment crosses turns as a snapshot.
pub fn run_episode(
    input: &EpisodeInput<'_>,
    config: &EpisodeConfig,
    backends: &AgentBackends,
    registry: &mut dyn ToolRegistry,
) -> EpisodeTrace {
    let total = Instant::now();
    let question = input.question;
    let max_iterations = config.max_iterations.max(1);
    let mut set = InformationSet::new();
    let mut saved = snapshot(&Environment::new());
    let mut requests: Vec<String> = Vec::new();
    let mut request = INITIAL_REQUEST.to_string();
    let mut trace = EpisodeTrace {
        question: question.clone(),
        iterations: Vec::new(),
        final_answer: String::new(),
        forced: None,
        forced_messages: Vec::new(),
        final_set: Vec::new(),
        timings: PhaseTimings::default(),
        warnings: Vec::new(),
        errors: Vec::new(),
    };
    let mut answer: Option<(String, bool)> = None;

    for n in 1..=max_iterations {
        let started = Instant::now();
        set.iteration = n;
        let mut env = match restore(&saved) {
            Ok(env) => env,
            Err(e) => {
                trace.warnings.push(format!("environment snapshot unreadable, starting empty: {e}"));
                Environment::new()
            }
        };
        let pa = pa_turn(
            &request,
            &mut set,
            &mut env,
            question,
            input.images,
            input.image_count,
            backends.perception.as_ref(),
            registry,
            config,
        );
        saved = snapshot(&env);
        let set_before = set.active_items();
        let curation = ra_curate(&mut set, question, backends.reasoning.as_ref(), config);
        let set_after = set.active_items();
        let decision = ra_decide(&set, question, &requests, backends.reasoning.as_ref(), config);

        let mut record = IterationRecord {
            index: n,
            request: request.clone(),
            pa_replies: pa.attempts.iter().map(|a| a.reply.clone()).collect(),
            program: pa.program.clone(),
            log: pa.log.clone(),
            pa_error: pa.error.clone(),
            set_before,
            set_after,
            pruned: curation.pruned.clone(),
            plan: curation.plan.clone(),
            ra_messages: curation.messages.iter().chain(&decision.messages).cloned().collect(),
            decision: decision.decision.clone(),
            warnings: curation.warnings.iter().chain(&decision.warnings).cloned().collect(),
            snapshot_bytes: saved.len(),
            timings: PhaseTimings {
                perception_model_ms: pa.model_ms,
                tool_ms: pa.tool_ms,
                curation_ms: curation.model_ms,
                decision_ms: decision.model_ms,
                total_ms: 0.0,
            },
        };
        if let Some(e) = &pa.error {
            record.warnings.push(format!("perception turn contributed nothing: {e}"));
            if pa.backend_failed {
                trace.errors.push(e.clone());
            }
        }
        trace.errors.extend(curation.errors.iter().chain(&decision.errors).cloned());
        record.timings.total_ms = started.elapsed().as_secs_f64() * 1e3;
        trace.timings.add(&record.timings);
        trace.iterations.push(record);

        match (decision.decision, decision.answer) {
            (Some(Decision::Request { text }), _) => {
                requests.push(text.clone());
                request = text;
            }
            (_, Some(label)) => {
                answer = Some((label, decision.fallback));
                break;
            }
            (_, None) => unreachable!("a decision without a request always carries an answer"),
        }
    }

    let (label, fallback) = match answer {
        Some(a) => a,
        None => {
            trace.forced = Some(ForcedReason::IterationCap);
            let forced = ra_answer(&set, question, backends.reasoning.as_ref(), config, "forced");
            trace.timings.decision_ms += forced.model_ms;
            trace.forced_messages = forced.messages;
            trace.warnings.extend(forced.warnings);
            trace.errors.extend(forced.errors);
            (forced.answer.expect("forced answer always set"), forced.fallback)
        }
    };
    if fallback {
        trace.forced = Some(ForcedReason::Fallback);
        trace.warnings.push(format!("no usable answer; fell back to label {label}"));
    }
    trace.final_answer = label;
    trace.final_set = set.active_items();
    trace.timings.total_ms = total.elapsed().as_secs_f64() * 1e3;
    trace
}
