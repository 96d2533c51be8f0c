use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{run_episode, AgentBackends, EpisodeConfig, EpisodeInput, EpisodeTrace, ForcedReason, PerceptionTools, PhaseTimings};
use crate::backends::{ImageRef, NoisyOracleVision, OracleVision, SyntheticProvider, VisionBackend};
use crate::scene_sim::{build_scene, SyntheticScene};

use super::{Benchmark, BenchmarkItem, HarnessError};

/// Vision backend used by the perception tools.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum VisionProfile {
    Oracle,
    /// Oracle that picks the second-best arrow with probability `p`.
    Noisy { p: f64 },
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub episode: EpisodeConfig,
    pub workers: usize,
    pub vision: VisionProfile,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { episode: EpisodeConfig::default(), workers: 1, vision: VisionProfile::Oracle }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub id: String,
    pub category: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted: Option<String>,
    pub correct: bool,
    pub iterations: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forced: Option<ForcedReason>,
    pub timings: PhaseTimings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub category: String,
    pub count: usize,
    pub accuracy: f64,
    pub mean_iterations: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub items: Vec<ItemResult>,
    pub accuracy: f64,
    pub mean_iterations: f64,
    pub per_category: Vec<CategoryStats>,
    /// Mean phase timings per item.
    pub mean_timings: PhaseTimings,
    pub total_iterations: u64,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

impl RunReport {
    /// Aggregates per-item results; every figure is recomputable from `items`.
    pub fn from_items(items: Vec<ItemResult>) -> Self {
        let mut by_cat: BTreeMap<&str, Vec<&ItemResult>> = BTreeMap::new();
        for it in &items {
            by_cat.entry(it.category.as_str()).or_default().push(it);
        }
        let per_category = by_cat
            .into_iter()
            .map(|(cat, its)| CategoryStats {
                category: cat.to_string(),
                count: its.len(),
                accuracy: mean(its.iter().map(|i| f64::from(u8::from(i.correct)))),
                mean_iterations: mean(its.iter().map(|i| f64::from(i.iterations))),
            })
            .collect();
        let t = |f: fn(&PhaseTimings) -> f64| mean(items.iter().map(|i| f(&i.timings)));
        let mean_timings = PhaseTimings {
            perception_model_ms: t(|p| p.perception_model_ms),
            tool_ms: t(|p| p.tool_ms),
            curation_ms: t(|p| p.curation_ms),
            decision_ms: t(|p| p.decision_ms),
            total_ms: t(|p| p.total_ms),
        };
        Self {
            accuracy: mean(items.iter().map(|i| f64::from(u8::from(i.correct)))),
            mean_iterations: mean(items.iter().map(|i| f64::from(i.iterations))),
            per_category,
            mean_timings,
            total_iterations: items.iter().map(|i| u64::from(i.iterations)).sum(),
            items,
        }
    }

    /// Copy with wall-clock figures zeroed, for reproducibility comparisons.
    pub fn without_timings(&self) -> Self {
        let mut out = self.clone();
        out.mean_timings = PhaseTimings::default();
        out.items.iter_mut().for_each(|i| i.timings = PhaseTimings::default());
        out
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    /// One per item, in item order; `None` where the item could not start.
    pub traces: Vec<Option<EpisodeTrace>>,
}

/// Per-episode seed: stable in the item id, independent of scheduling.
pub fn episode_seed(base: u64, id: &str) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ base
}

/// Perception tools over a synthetic scene with oracle reconstruction.
pub fn scene_tools(scene: Arc<SyntheticScene>, vision: VisionProfile, seed: u64) -> PerceptionTools {
    let oracle = OracleVision::new(scene.clone());
    let vision: Arc<dyn VisionBackend> = match vision {
        VisionProfile::Oracle => Arc::new(oracle),
        VisionProfile::Noisy { p } => Arc::new(NoisyOracleVision::new(oracle, p, seed)),
    };
    let images = ImageRef::indexed(scene.view_count());
    PerceptionTools::new(images, Arc::new(SyntheticProvider::new(scene)), vision, seed)
}

fn run_item(
    item: &BenchmarkItem,
    scene: Option<&Arc<SyntheticScene>>,
    config: &RunConfig,
    backends: &AgentBackends,
) -> Result<EpisodeTrace, String> {
    let scene = scene.ok_or("items without a synthetic scene need a reconstruction provider, and none is configured")?;
    let seed = episode_seed(config.episode.rng_seed, &item.id);
    let mut tools = scene_tools(scene.clone(), config.vision, seed);
    let mut episode = config.episode.clone();
    episode.rng_seed = seed;
    let question = item.to_question();
    let input = EpisodeInput { question: &question, images: &[], image_count: scene.view_count() };
    catch_unwind(AssertUnwindSafe(|| run_episode(&input, &episode, backends, &mut tools))).map_err(|p| {
        let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
        format!("episode panicked: {}", msg.unwrap_or_default())
    })
}

fn result_for(item: &BenchmarkItem, outcome: &Result<EpisodeTrace, String>) -> ItemResult {
    let mut result = ItemResult {
        id: item.id.clone(),
        category: item.category.clone(),
        answer: item.answer.clone(),
        predicted: None,
        correct: false,
        iterations: 0,
        forced: None,
        timings: PhaseTimings::default(),
        failure: None,
    };
    match outcome {
        Err(e) => result.failure = Some(e.clone()),
        Ok(trace) => {
            result.predicted = Some(trace.final_answer.clone());
            result.iterations = trace.iteration_count();
            result.forced = trace.forced;
            result.timings = trace.timings;
            if trace.errors.is_empty() {
                result.correct = trace.final_answer == item.answer;
            } else {
                result.failure = Some(trace.errors.join("; "));
            }
        }
    }
    result
}

/// Runs every item as an independent episode on `config.workers` threads.
/// Results come back in item order whatever the scheduling, and a failing
/// item is recorded without affecting the others.
pub fn run_benchmark(bench: &Benchmark, config: &RunConfig, backends: &AgentBackends) -> Result<RunOutput, HarnessError> {
    if bench.items.is_empty() {
        return Err(HarnessError::NoItems);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .map_err(|e| HarnessError::Io(format!("worker pool: {e}")))?;
    pool.install(|| {
        let scenes: BTreeMap<&String, Result<Arc<SyntheticScene>, String>> = bench
            .scenes
            .par_iter()
            .map(|(name, spec)| (name, build_scene(spec).map(Arc::new).map_err(|e| e.to_string())))
            .collect();
        let outcomes: Vec<Result<EpisodeTrace, String>> = bench
            .items
            .par_iter()
            .map(|item| match item.scene.as_ref().map(|s| &scenes[s]) {
                Some(Err(e)) => Err(format!("scene failed to build: {e}")),
                Some(Ok(scene)) => run_item(item, Some(scene), config, backends),
                None => run_item(item, None, config, backends),
            })
            .collect();
        let items = bench.items.iter().zip(&outcomes).map(|(i, o)| result_for(i, o)).collect();
        Ok(RunOutput { report: RunReport::from_items(items), traces: outcomes.into_iter().map(Result::ok).collect() })
    })
}
