//! Benchmark runner, scorer and exporters: loads a benchmark split, runs one
//! episode per item on a worker pool, reports accuracy, iterations and phase
//! timings, and exports traces as static HTML and correct episodes as
//! annotation records.

mod annotations;
mod benchmark;
mod html;
mod run;
mod stats;
mod store;

use std::path::PathBuf;

use thiserror::Error;

pub use annotations::{
    cited_keys, export_annotations, synthesize_cot, write_jsonl, AnnotationFilter, AnnotationRecord, ChatFilter, RuleFilter,
    ANNOTATION_SCHEMA,
};
pub use benchmark::{
    generate_synthetic, load_benchmark, parse_benchmark, save_benchmark, Benchmark, BenchmarkItem, BENCHMARK_VERSION,
};
pub use html::{export_trace_html, render_trace_html, trace_file_name};
pub use run::{
    episode_seed, run_benchmark, scene_tools, CategoryStats, ItemResult, RunConfig, RunOutput, RunReport, VisionProfile,
};
pub use stats::{stats_report, StatsReport, Table};
pub use store::{load_run, save_run, score_traces, REPORT_FILE, TRACES_FILE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("{}: invalid or missing field `{field}`", path.display())]
    Schema { path: PathBuf, field: String },
    #[error("io: {0}")]
    Io(String),
    #[error("no items")]
    NoItems,
    #[error("every sampled episode was filtered out")]
    EmptyAfterFilter,
    #[error("scene: {0}")]
    Scene(String),
}
