use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use mssr_core::agents::{AgentBackends, EpisodeConfig, PromptSet};
use mssr_core::backends::{HttpChatBackend, HttpChatConfig, ScriptedPerception, ScriptedReasoner};
use mssr_core::harness::{
    export_annotations, export_trace_html, generate_synthetic, load_benchmark, load_run, run_benchmark, save_benchmark,
    save_run, score_traces, stats_report, write_jsonl, AnnotationFilter, ChatFilter, RuleFilter, RunConfig, VisionProfile,
};
use mssr_core::scene_sim::RandomSceneConfig;

/// Multi-view spatial question answering with a perception agent and a
/// reasoning agent over explicit 3D geometry.
///
/// The http profile reads MSSR_CHAT_URL (chat-completions endpoint),
/// MSSR_CHAT_MODEL and MSSR_API_KEY.
#[derive(Parser)]
#[command(name = "mssr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    /// Scripted agents with oracle vision over synthetic scenes.
    Oracle,
    /// Scripted agents; the arrow selector errs with probability --noise.
    Noisy,
    /// Hosted chat model for both agents; oracle vision.
    Http,
}

#[derive(Clone, Copy, ValueEnum)]
enum FilterKind {
    Rules,
    /// Rule checks, then a verdict from the http chat model.
    Chat,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark with inline scenes.
    GenSynthetic {
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 10)]
        per_scene: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every benchmark item and write report.json and traces.json.
    Run {
        #[arg(long)]
        benchmark: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, value_enum, default_value_t = Profile::Oracle)]
        profile: Profile,
        #[arg(long, default_value_t = 0.2)]
        noise: f64,
        #[arg(long, default_value_t = 4)]
        max_iterations: u32,
        /// Directory of prompt templates overriding the built-in ones.
        #[arg(long)]
        prompts: Option<PathBuf>,
    },
    /// Re-score a run's traces against the benchmark answers.
    Score {
        #[arg(long)]
        benchmark: PathBuf,
        #[arg(long)]
        run: PathBuf,
    },
    /// Print accuracy, iteration and timing tables for a run.
    Stats {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Write static HTML pages for a run's traces.
    ExportTraces {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export filtered correct episodes as JSONL training records.
    ExportAnnotations {
        #[arg(long)]
        benchmark: PathBuf,
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = FilterKind::Rules)]
        filter: FilterKind,
    },
}

fn http_backend() -> Result<Arc<HttpChatBackend>> {
    let config = HttpChatConfig::from_env().context("MSSR_CHAT_URL is not set")?;
    Ok(Arc::new(HttpChatBackend::new(config)))
}

fn main() -> Result<()> {
    env_logger::init();
    match Cli::parse().command {
        Command::GenSynthetic { count, per_scene, seed, out } => {
            let bench = generate_synthetic(count, per_scene, seed, &RandomSceneConfig::default())?;
            save_benchmark(&bench, &out)?;
            println!("wrote {} items over {} scenes to {}", bench.items.len(), bench.scenes.len(), out.display());
        }
        Command::Run { benchmark, out, seed, workers, profile, noise, max_iterations, prompts } => {
            if max_iterations == 0 {
                bail!("--max-iterations must be at least 1");
            }
            let bench = load_benchmark(&benchmark)?;
            let prompts = match prompts {
                Some(dir) => PromptSet::load_dir(&dir)?,
                None => PromptSet::default(),
            };
            let episode = EpisodeConfig { max_iterations, rng_seed: seed, prompts: Arc::new(prompts), ..EpisodeConfig::default() };
            let (backends, vision) = match profile {
                Profile::Oracle | Profile::Noisy => {
                    let scripted = AgentBackends { perception: Arc::new(ScriptedPerception), reasoning: Arc::new(ScriptedReasoner) };
                    let vision = match profile {
                        Profile::Noisy => VisionProfile::Noisy { p: noise },
                        _ => VisionProfile::Oracle,
                    };
                    (scripted, vision)
                }
                Profile::Http => {
                    let chat = http_backend()?;
                    (AgentBackends { perception: chat.clone(), reasoning: chat }, VisionProfile::Oracle)
                }
            };
            let output = run_benchmark(&bench, &RunConfig { episode, workers, vision }, &backends)?;
            save_run(&output, &out)?;
            let failed = output.report.items.iter().filter(|i| i.failure.is_some()).count();
            println!(
                "{} items, accuracy {:.1}%, mean iterations {:.2}, {failed} failed; wrote {}",
                output.report.items.len(),
                100.0 * output.report.accuracy,
                output.report.mean_iterations,
                out.display()
            );
        }
        Command::Score { benchmark, run } => {
            let bench = load_benchmark(&benchmark)?;
            let stored = load_run(&run)?;
            let report = score_traces(&bench, &stored.traces)?;
            for c in &report.per_category {
                println!("{:<16} {:>6.1}%  ({} items)", c.category, 100.0 * c.accuracy, c.count);
            }
            println!("{:<16} {:>6.1}%  ({} items)", "overall", 100.0 * report.accuracy, report.items.len());
            if (report.accuracy - stored.report.accuracy).abs() > 1e-12 {
                bail!("stored report says {:.4}, traces say {:.4}", stored.report.accuracy, report.accuracy);
            }
        }
        Command::Stats { run, json } => {
            let stats = stats_report(&load_run(&run)?.report)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&stats.tables)?);
            } else {
                print!("{}", stats.text);
            }
        }
        Command::ExportTraces { run, out } => {
            let traces: Vec<_> = load_run(&run)?.traces.into_iter().flatten().collect();
            let written = export_trace_html(&traces, &out)?;
            println!("wrote {} pages to {}", written.len(), out.display());
        }
        Command::ExportAnnotations { benchmark, run, out, fraction, seed, filter } => {
            let bench = load_benchmark(&benchmark)?;
            let stored = load_run(&run)?;
            let filter = match filter {
                FilterKind::Rules => AnnotationFilter::Rules(RuleFilter::default()),
                FilterKind::Chat => AnnotationFilter::Chat(RuleFilter::default(), ChatFilter::new(http_backend()?)),
            };
            let records = export_annotations(&bench.items, &stored.traces, &filter, fraction, seed)?;
            write_jsonl(&records, &out)?;
            println!("wrote {} records to {}", records.len(), out.display());
        }
    }
    Ok(())
}
