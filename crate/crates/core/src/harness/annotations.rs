use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::prompts::{format_choices, render, tag_content};
use crate::agents::{Decision, EpisodeTrace, InformationItem};
use crate::backends::{ChatBackend, ChatTurn};
use crate::keys::{self, KeyKind};
use crate::scene_sim::Choice;

use super::{BenchmarkItem, HarnessError};

pub const ANNOTATION_SCHEMA: &str = "mssr-annotation/1";
const CITE_OPEN: &str = "[evidence: ";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub schema: String,
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<PathBuf>,
    pub question: String,
    pub choices: Vec<Choice>,
    pub cot: String,
    pub answer: String,
}

/// Deterministic checks for traces whose correct answer is not backed by a
/// coherent trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RuleFilter {
    pub reject_forced: bool,
    pub require_plan: bool,
}

impl Default for RuleFilter {
    fn default() -> Self {
        Self { reject_forced: true, require_plan: true }
    }
}

impl RuleFilter {
    /// Why the trace is rejected, or `None` to keep it.
    pub fn rejects(&self, trace: &EpisodeTrace) -> Option<&'static str> {
        if self.reject_forced && trace.forced.is_some() {
            return Some("forced decision");
        }
        if !matches!(trace.iterations.last().and_then(|i| i.decision.as_ref()), Some(Decision::Decide { .. })) {
            return Some("episode did not end in a decide");
        }
        if trace.final_set.is_empty() {
            return Some("empty final set");
        }
        if !trace.errors.is_empty() {
            return Some("backend errors");
        }
        if self.require_plan && trace.iterations.iter().all(|i| i.plan.is_none()) {
            return Some("no plan");
        }
        None
    }
}

/// A chat model asked whether the synthesized reasoning holds up.
#[derive(Clone)]
pub struct ChatFilter {
    pub backend: Arc<dyn ChatBackend>,
    /// Template with `{question}`, `{choices}`, `{cot}` and `{answer}`.
    pub template: String,
}

impl ChatFilter {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        Self { backend, template: include_str!("../../prompts/annotation_filter.txt").into() }
    }

    fn keeps(&self, record: &AnnotationRecord) -> bool {
        let prompt = render(
            &self.template,
            &[
                ("question", &record.question),
                ("choices", &format_choices(&record.choices)),
                ("cot", &record.cot),
                ("answer", &record.answer),
            ],
        );
        self.backend
            .chat(&[ChatTurn::user(prompt)])
            .is_ok_and(|r| tag_content(&r.text, "Verdict").is_some_and(|v| v.eq_ignore_ascii_case("keep")))
    }
}

#[derive(Clone)]
pub enum AnnotationFilter {
    Rules(RuleFilter),
    /// Rule checks first, then the model's verdict.
    Chat(RuleFilter, ChatFilter),
}

/// Names an item's key refers to, used to tie it to plan steps.
fn key_terms(key: &str) -> Vec<String> {
    let image = |v: usize| format!("image {}", v + 1);
    match keys::parse(key) {
        Some(KeyKind::Position(o)) | Some(KeyKind::FacingDir(o)) => vec![o],
        Some(KeyKind::Distance(a, b)) => vec![a, b],
        Some(KeyKind::Extrinsic(v)) => vec![image(v)],
        Some(KeyKind::Motion(a, b)) => vec![image(a), image(b)],
        Some(KeyKind::RelativePosition(o, v)) => vec![o, image(v)],
        Some(KeyKind::Compass { target, anchor }) => vec![target, anchor],
        Some(KeyKind::Egocentric { target, observer }) => vec![target, observer],
        Some(KeyKind::GroundNormal) | None => Vec::new(),
    }
}

fn evidence_sentence(item: &InformationItem) -> String {
    format!("{CITE_OPEN}{}] {} = {}.", item.key, item.key, item.value)
}

/// Chain of thought interleaving the plan steps with the final-set items
/// that substantiate them. Each item is cited once, under the last step that
/// mentions what it is about; items no step mentions go under the last step.
pub fn synthesize_cot(trace: &EpisodeTrace) -> String {
    let plan = trace.iterations.iter().rev().find_map(|i| i.plan.as_deref()).unwrap_or("1. Use the collected facts.");
    let steps: Vec<&str> = plan.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let mut placed: Vec<Vec<&InformationItem>> = vec![Vec::new(); steps.len().max(1)];
    for item in &trace.final_set {
        let terms = key_terms(&item.key);
        let step = steps
            .iter()
            .rposition(|s| terms.iter().any(|t| s.contains(t.as_str())))
            .unwrap_or(placed.len() - 1);
        placed[step].push(item);
    }
    let mut lines = Vec::new();
    for (i, step) in steps.iter().enumerate() {
        let text = step.split_once(". ").map_or(*step, |(_, rest)| rest);
        lines.push(format!("Step {}: {text}", i + 1));
        lines.extend(placed[i].iter().map(|item| evidence_sentence(item)));
    }
    let label = &trace.final_answer;
    let choice = trace.question.choices.iter().find(|c| c.label == *label).map_or("", |c| c.text.as_str());
    lines.push(format!("Therefore the answer is {label} ({choice})."));
    lines.join("\n")
}

/// Keys cited in a chain of thought, in order.
pub fn cited_keys(cot: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = cot;
    while let Some(start) = rest.find(CITE_OPEN) {
        let after = &rest[start + CITE_OPEN.len()..];
        let Some(end) = after.find(']') else { break };
        out.push(after[..end].to_string());
        rest = &after[end..];
    }
    out
}

/// Samples `sample_fraction` of the correct episodes (seeded), drops those
/// the filter rejects and turns the rest into training records.
pub fn export_annotations(
    items: &[BenchmarkItem],
    traces: &[Option<EpisodeTrace>],
    filter: &AnnotationFilter,
    sample_fraction: f64,
    seed: u64,
) -> Result<Vec<AnnotationRecord>, HarnessError> {
    let correct: Vec<(&BenchmarkItem, &EpisodeTrace)> = items
        .iter()
        .zip(traces)
        .filter_map(|(item, t)| t.as_ref().map(|t| (item, t)))
        .filter(|(item, t)| t.final_answer == item.answer)
        .collect();
    let take = ((sample_fraction.clamp(0.0, 1.0) * correct.len() as f64).ceil() as usize).min(correct.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, correct.len(), take).into_vec();
    picked.sort_unstable();

    let rules = match filter {
        AnnotationFilter::Rules(r) | AnnotationFilter::Chat(r, _) => r,
    };
    let mut records = Vec::new();
    for (item, trace) in picked.into_iter().map(|i| correct[i]) {
        if rules.rejects(trace).is_some() {
            continue;
        }
        let record = AnnotationRecord {
            schema: ANNOTATION_SCHEMA.into(),
            id: item.id.clone(),
            scene: item.scene.clone(),
            images: item.images.clone(),
            question: item.question.clone(),
            choices: item.choices.clone(),
            cot: synthesize_cot(trace),
            answer: item.answer.clone(),
        };
        if let AnnotationFilter::Chat(_, chat) = filter {
            if !chat.keeps(&record) {
                continue;
            }
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(HarnessError::EmptyAfterFilter);
    }
    Ok(records)
}

pub fn write_jsonl(records: &[AnnotationRecord], path: &Path) -> Result<(), HarnessError> {
    let io = |e: std::io::Error| HarnessError::Io(format!("{}: {e}", path.display()));
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for r in records {
        writeln!(file, "{}", serde_json::to_string(r).expect("record serializes")).map_err(io)?;
    }
    file.flush().map_err(io)
}
