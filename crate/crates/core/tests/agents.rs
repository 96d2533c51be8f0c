mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use mssr_core::agents::{
    minimality_ablation, pa_turn, ra_curate, ra_decide, run_episode, AgentBackends, AgentError, Decision, EpisodeConfig,
    EpisodeInput, ForcedReason, InformationSet, PerceptionTools, Question, INITIAL_REQUEST,
};
use mssr_core::backends::{BackendError, ChatBackend, ChatReply, ChatTurn, ScriptedPerception, ScriptedReasoner};
use mssr_core::dsl::{Emission, Environment, Provenance, Value};
use mssr_core::harness::{scene_tools, Benchmark, BenchmarkItem, VisionProfile};
use mssr_core::keys;
use mssr_core::scene_sim::{build_scene, parse_question, Choice, SyntheticScene};
use proptest::prelude::*;

/// Chat backend replying from a closure, counting calls.
struct Canned<F> {
    reply: F,
    calls: AtomicUsize,
}

impl<F: Fn(&[ChatTurn]) -> String + Send + Sync> Canned<F> {
    fn new(reply: F) -> Self {
        Self { reply, calls: AtomicUsize::new(0) }
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<F: Fn(&[ChatTurn]) -> String + Send + Sync> ChatBackend for Canned<F> {
    fn chat(&self, history: &[ChatTurn]) -> Result<ChatReply, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(ChatReply::new((self.reply)(history)))
    }
}

fn bench() -> Benchmark {
    common::synthetic(40, 3)
}

fn first_of<'a>(bench: &'a Benchmark, category: &str) -> &'a BenchmarkItem {
    bench.items.iter().find(|i| i.category == category).unwrap_or_else(|| panic!("no {category} item"))
}

fn scene_for(bench: &Benchmark, item: &BenchmarkItem) -> Arc<SyntheticScene> {
    Arc::new(build_scene(&bench.scenes[item.scene.as_ref().unwrap()]).unwrap())
}

fn tools(scene: &Arc<SyntheticScene>) -> PerceptionTools {
    scene_tools(scene.clone(), VisionProfile::Oracle, 0)
}

/// Runs the broad first turn and returns the resulting set and environment.
fn extracted(scene: &Arc<SyntheticScene>, question: &Question, registry: &mut PerceptionTools) -> (InformationSet, Environment) {
    let mut set = InformationSet::new();
    let mut env = Environment::new();
    let config = EpisodeConfig::default();
    let turn = pa_turn(INITIAL_REQUEST, &mut set, &mut env, question, &[], scene.view_count(), &ScriptedPerception, registry, &config);
    assert!(turn.error.is_none(), "{:?}", turn.error);
    (set, env)
}

fn question() -> Question {
    Question {
        id: "q".into(),
        text: "Which is it?".into(),
        choices: ["A", "B", "C", "D"].iter().map(|l| Choice { label: l.to_string(), text: format!("option {l}") }).collect(),
        answer: Some("C".into()),
        category: None,
    }
}

fn numbered_set(n: usize) -> InformationSet {
    let emitted: Vec<Emission> = (0..n)
        .map(|i| Emission {
            key: format!("fact_{i:02}"),
            value: Value::Number(i as f64),
            provenance: Provenance { module: "perception".into(), op: "distance".into(), args: vec![], turn: 1 },
        })
        .collect();
    let mut set = InformationSet::new();
    set.merge(&emitted);
    set
}

#[test]
fn first_turn_extracts_everything() {
    let bench = bench();
    let item = first_of(&bench, "direction");
    let scene = scene_for(&bench, item);
    let mut registry = tools(&scene);
    let q = item.to_question();
    let (set, _) = extracted(&scene, &q, &mut registry);
    let named = parse_question(&q.text, &q.choices).unwrap().objects();
    let (objects, views) = (named.len(), scene.view_count());
    // ground normal, positions, pairwise distances, extrinsics, consecutive motions, per-view relative positions
    let expected = 1 + objects + objects * (objects - 1) / 2 + views + (views - 1) + objects * views;
    assert_eq!(set.len(), expected);
    assert!(set.get(keys::GROUND_NORMAL).is_some());
    for o in &named {
        assert!(set.get(&keys::position(o)).is_some(), "missing position of {o}");
    }
}

#[test]
fn facing_request_adds_exactly_one_facing_item() {
    let bench = bench();
    let item = first_of(&bench, "facing");
    let scene = scene_for(&bench, item);
    let q = item.to_question();
    let mut registry = tools(&scene);
    let (mut set, mut env) = extracted(&scene, &q, &mut registry);
    let config = EpisodeConfig::default();
    let decision = ra_decide(&set, &q, &[], &ScriptedReasoner, &config);
    let Some(Decision::Request { text }) = decision.decision else { panic!("expected a request, got {decision:?}") };
    let before = set.active_keys();
    let turn = pa_turn(&text, &mut set, &mut env, &q, &[], scene.view_count(), &ScriptedPerception, &mut registry, &config);
    assert!(turn.error.is_none(), "{:?}", turn.error);
    let added: Vec<String> = set.active_keys().into_iter().filter(|k| !before.contains(k)).collect();
    assert_eq!(added.len(), 1, "{added:?}");
    assert!(added[0].starts_with("facing_dir_"), "{added:?}");
}

#[test]
fn unparsable_replies_exhaust_retries_and_change_nothing() {
    let bench = bench();
    let item = first_of(&bench, "nearest");
    let scene = scene_for(&bench, item);
    let q = item.to_question();
    let mut registry = tools(&scene);
    let (mut set, mut env) = extracted(&scene, &q, &mut registry);
    let (set_before, env_before) = (set.clone(), env.clone());
    let garbage = Canned::new(|_| "```\nthis is ( not a program\n```".to_string());
    let config = EpisodeConfig { pa_repair_retries: 1, ..EpisodeConfig::default() };
    let turn = pa_turn("anything", &mut set, &mut env, &q, &[], 3, &garbage, &mut registry, &config);
    assert_eq!(garbage.calls(), 2);
    assert_eq!(turn.attempts.len(), 2);
    assert!(turn.attempts.iter().all(|a| a.diagnostic.is_some()));
    let err = turn.error.expect("turn fails");
    assert_eq!(err, AgentError::PaExhaustedRetries { attempts: 2, last: turn.attempts[1].diagnostic.clone().unwrap() }.to_string());
    assert_eq!(set, set_before);
    assert_eq!(env, env_before);
}

#[test]
fn tool_failure_in_a_later_statement_rolls_back_the_turn() {
    let bench = bench();
    let item = first_of(&bench, "nearest");
    let scene = scene_for(&bench, item);
    let q = item.to_question();
    let mut registry = tools(&scene);
    let (mut set, mut env) = extracted(&scene, &q, &mut registry);
    let (set_before, env_before) = (set.clone(), env.clone());
    let half_good = Canned::new(|_| "```\nemit \"note\" 1\nfresh = perception.no_such_op()\n```".to_string());
    let config = EpisodeConfig { pa_repair_retries: 0, ..EpisodeConfig::default() };
    let turn = pa_turn("anything", &mut set, &mut env, &q, &[], 3, &half_good, &mut registry, &config);
    assert!(turn.error.is_some());
    assert_eq!(set, set_before);
    assert_eq!(env, env_before);
}

#[test]
fn curation_keeps_three_of_eighteen() {
    let mut set = numbered_set(18);
    let keeper = Canned::new(|_| "<Plan>1. Use the three facts.</Plan>\n<Keep>[\"fact_03\", \"fact_07\", \"fact_11\"]</Keep>".to_string());
    let out = ra_curate(&mut set, &question(), &keeper, &EpisodeConfig::default());
    assert_eq!(set.active_keys(), vec!["fact_03", "fact_07", "fact_11"]);
    assert_eq!(out.pruned.len(), 15);
    assert_eq!(set.len(), 3);
    assert_eq!(out.plan.as_deref(), Some("1. Use the three facts."));
    assert!(out.warnings.is_empty());
}

#[test]
fn curation_keeping_everything_is_identity() {
    let mut set = numbered_set(5);
    let before = set.clone();
    let all = serde_json::to_string(&before.active_keys()).unwrap();
    let keeper = Canned::new(move |_| format!("<Plan>1. All.</Plan><Keep>{all}</Keep>"));
    let out = ra_curate(&mut set, &question(), &keeper, &EpisodeConfig::default());
    assert!(out.pruned.is_empty());
    assert_eq!(set, before);
}

#[test]
fn unknown_key_in_keep_list_retries_then_keeps_everything() {
    let mut set = numbered_set(6);
    let before = set.clone();
    let confused = Canned::new(|_| "<Keep>[\"fact_00\", \"made_up\"]</Keep>".to_string());
    let config = EpisodeConfig::default();
    let out = ra_curate(&mut set, &question(), &confused, &config);
    assert_eq!(confused.calls(), config.curation_retries as usize + 1);
    assert_eq!(set, before);
    assert!(out.pruned.is_empty());
    assert_eq!(out.warnings.len(), 1, "{:?}", out.warnings);
}

#[test]
fn decide_with_required_facts_gives_ground_truth() {
    let bench = bench();
    for category in ["direction", "camera-motion", "nearest"] {
        let item = first_of(&bench, category);
        let scene = scene_for(&bench, item);
        let q = item.to_question();
        let mut registry = tools(&scene);
        let mut env = Environment::new();
        let mut set = InformationSet::new();
        let config = EpisodeConfig::default();
        // Feed every required key through the scripted perception agent first.
        let intent = parse_question(&q.text, &q.choices).expect("generated question parses");
        pa_turn(INITIAL_REQUEST, &mut set, &mut env, &q, &[], scene.view_count(), &ScriptedPerception, &mut registry, &config);
        for key in intent.required_keys() {
            if set.get(&key).is_none() {
                let request = format!("Provide the fact (key: {key})");
                let t = pa_turn(&request, &mut set, &mut env, &q, &[], scene.view_count(), &ScriptedPerception, &mut registry, &config);
                assert!(t.error.is_none(), "{category}: {:?}", t.error);
            }
        }
        let d = ra_decide(&set, &q, &[], &ScriptedReasoner, &config);
        assert!(matches!(d.decision, Some(Decision::Decide { .. })), "{category}: {:?}", d.decision);
        assert_eq!(d.answer.as_deref(), Some(item.answer.as_str()), "{category}");
        assert!(!d.fallback);
    }
}

#[test]
fn missing_key_is_requested_by_name() {
    let bench = bench();
    let item = first_of(&bench, "direction");
    let scene = scene_for(&bench, item);
    let q = item.to_question();
    let mut registry = tools(&scene);
    let (set, _) = extracted(&scene, &q, &mut registry);
    let intent = parse_question(&q.text, &q.choices).unwrap();
    let missing: Vec<String> = intent.required_keys().into_iter().filter(|k| set.get(k).is_none()).collect();
    assert_eq!(missing.len(), 1, "{missing:?}");
    let d = ra_decide(&set, &q, &[], &ScriptedReasoner, &EpisodeConfig::default());
    let Some(Decision::Request { text }) = d.decision else { panic!("{d:?}") };
    assert!(text.contains(&format!("(key: {})", missing[0])), "{text}");
    assert!(d.answer.is_none());
}

#[test]
fn tagless_decisions_fall_back_to_lowest_label() {
    let set = numbered_set(2);
    let mute = Canned::new(|_| "I am not sure.".to_string());
    let config = EpisodeConfig::default();
    let d = ra_decide(&set, &question(), &[], &mute, &config);
    assert_eq!(mute.calls(), config.decide_retries as usize + 1);
    assert!(d.fallback);
    assert_eq!(d.answer.as_deref(), Some("A"));
}

fn episode(bench: &Benchmark, item: &BenchmarkItem, config: &EpisodeConfig, backends: &AgentBackends, q: &Question) -> mssr_core::agents::EpisodeTrace {
    let scene = scene_for(bench, item);
    let mut registry = tools(&scene);
    let input = EpisodeInput { question: q, images: &[], image_count: scene.view_count() };
    run_episode(&input, config, backends, &mut registry)
}

#[test]
fn oracle_direction_question_is_answered() {
    let bench = bench();
    let item = first_of(&bench, "direction");
    let trace = episode(&bench, item, &EpisodeConfig::default(), &common::scripted(), &item.to_question());
    assert_eq!(trace.final_answer, item.answer);
    assert!(trace.iteration_count() <= 3);
    assert!(trace.forced.is_none());
    assert!(matches!(trace.iterations.last().unwrap().decision, Some(Decision::Decide { .. })));
}

#[test]
fn unusable_reasoner_ends_in_flagged_fallback() {
    let bench = bench();
    let item = first_of(&bench, "nearest");
    let mute: Arc<dyn ChatBackend> = Arc::new(Canned::new(|_| "no tags here".to_string()));
    let backends = AgentBackends { perception: Arc::new(ScriptedPerception), reasoning: mute };
    let q = item.to_question();
    let trace = episode(&bench, item, &EpisodeConfig::default(), &backends, &q);
    assert_eq!(trace.forced, Some(ForcedReason::Fallback));
    assert_eq!(trace.final_answer, q.fallback_label());
    assert_eq!(trace.iteration_count(), 1);
}

#[test]
fn single_iteration_cap_forces_after_one_turn() {
    let bench = bench();
    let item = first_of(&bench, "facing");
    let config = EpisodeConfig { max_iterations: 1, ..EpisodeConfig::default() };
    let trace = episode(&bench, item, &config, &common::scripted(), &item.to_question());
    assert_eq!(trace.iteration_count(), 1);
    assert!(!trace.iterations[0].pa_replies.is_empty());
    assert!(trace.forced.is_some());
    assert!(!trace.forced_messages.is_empty());
}

#[test]
fn empty_question_completes_with_fallback() {
    let bench = bench();
    let item = first_of(&bench, "nearest");
    let mut q = item.to_question();
    q.text = String::new();
    let trace = episode(&bench, item, &EpisodeConfig::default(), &common::scripted(), &q);
    assert_eq!(trace.forced, Some(ForcedReason::Fallback));
    assert_eq!(trace.final_answer, q.fallback_label());
    assert!(trace.iteration_count() <= EpisodeConfig::default().max_iterations);
}

#[test]
fn ablation_without_three_iteration_episodes_is_an_error() {
    let bench = bench();
    let item = first_of(&bench, "nearest");
    let trace = episode(&bench, item, &EpisodeConfig::default(), &common::scripted(), &item.to_question());
    assert_eq!(trace.iteration_count(), 1);
    let err = minimality_ablation(&[trace], &ScriptedReasoner, &EpisodeConfig::default()).unwrap_err();
    assert_eq!(err, AgentError::InsufficientEpisodes);
}

fn emission(key: String, turn: u32) -> Emission {
    Emission { key, value: Value::Number(turn as f64), provenance: Provenance { module: "m".into(), op: "o".into(), args: vec![], turn } }
}

proptest! {
    #[test]
    fn active_keys_stay_unique_and_curation_never_grows(
        rounds in proptest::collection::vec((proptest::collection::vec(0u8..12, 0..8), proptest::collection::vec(0u8..12, 0..8)), 1..6),
    ) {
        let mut set = InformationSet::new();
        for (turn, (emit, keep)) in rounds.into_iter().enumerate() {
            let turn = turn as u32 + 1;
            set.iteration = turn;
            let emitted: Vec<Emission> = emit.iter().map(|k| emission(format!("k{k}"), turn)).collect();
            set.merge(&emitted);
            let mut active = set.active_keys();
            let n = active.len();
            active.sort();
            active.dedup();
            prop_assert_eq!(active.len(), n);
            prop_assert!(set.active().all(|i| i.provenance.turn <= turn));
            let keep: Vec<String> = keep.iter().map(|k| format!("k{k}")).filter(|k| set.get(k).is_some_and(|i| i.is_active())).collect();
            set.retain_keys(&keep);
            prop_assert!(set.len() <= n);
            prop_assert!(set.active_keys().iter().all(|k| keep.contains(k)));
        }
    }
}
