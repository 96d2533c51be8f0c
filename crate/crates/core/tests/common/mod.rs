#![allow(dead_code)]

use std::sync::Arc;

use mssr_core::agents::prompts::{parse_info_lines, tag_content};
use mssr_core::agents::{run_episode, AgentBackends, EpisodeConfig, EpisodeInput, EpisodeTrace};
use mssr_core::backends::{ChatBackend, RecordingChat, ScriptedPerception, ScriptedReasoner};
use mssr_core::harness::{episode_seed, generate_synthetic, scene_tools, Benchmark, VisionProfile};
use mssr_core::scene_sim::{build_scene, RandomSceneConfig};

pub fn scripted() -> AgentBackends {
    AgentBackends { perception: Arc::new(ScriptedPerception), reasoning: Arc::new(ScriptedReasoner) }
}

pub fn synthetic(count: usize, seed: u64) -> Benchmark {
    generate_synthetic(count, 10, seed, &RandomSceneConfig::default()).expect("synthetic benchmark")
}

/// One episode with both chat roles wrapped in recorders.
pub struct Recorded {
    pub trace: EpisodeTrace,
    pub perception: Arc<RecordingChat>,
    pub reasoning: Arc<RecordingChat>,
}

pub fn run_recorded(
    bench: &Benchmark,
    index: usize,
    config: &EpisodeConfig,
    perception: Arc<dyn ChatBackend>,
    reasoning: Arc<dyn ChatBackend>,
) -> Recorded {
    let item = &bench.items[index];
    let spec = &bench.scenes[item.scene.as_ref().expect("synthetic item")];
    let scene = Arc::new(build_scene(spec).expect("scene builds"));
    let seed = episode_seed(config.rng_seed, &item.id);
    let mut tools = scene_tools(scene.clone(), VisionProfile::Oracle, seed);
    let perception = Arc::new(RecordingChat::new(perception));
    let reasoning = Arc::new(RecordingChat::new(reasoning));
    let backends = AgentBackends { perception: perception.clone(), reasoning: reasoning.clone() };
    let question = item.to_question();
    let mut episode = config.clone();
    episode.rng_seed = seed;
    let input = EpisodeInput { question: &question, images: &[], image_count: scene.view_count() };
    let trace = run_episode(&input, &episode, &backends, &mut tools);
    Recorded { trace, perception, reasoning }
}

/// Keys listed in a prompt's information-set block, or `None` when the
/// prompt has no such block.
pub fn prompt_keys(prompt: &str) -> Option<Vec<String>> {
    let block = tag_content(prompt, "information_set")?;
    let mut keys: Vec<String> = parse_info_lines(block).into_iter().map(|(k, _)| k).collect();
    keys.sort();
    Some(keys)
}

pub fn sorted_keys<'a>(items: impl IntoIterator<Item = &'a mssr_core::agents::InformationItem>) -> Vec<String> {
    let mut keys: Vec<String> = items.into_iter().map(|i| i.key.clone()).collect();
    keys.sort();
    keys
}
