use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::agents::EpisodeTrace;

use super::{Benchmark, HarnessError, ItemResult, RunOutput, RunReport};

pub const REPORT_FILE: &str = "report.json";
pub const TRACES_FILE: &str = "traces.json";

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).expect("run artifacts serialize");
    std::fs::write(path, text).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Schema { path: path.to_path_buf(), field: e.to_string() })
}

/// Writes the report and traces of a run into `dir`.
pub fn save_run(output: &RunOutput, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io(format!("{}: {e}", dir.display())))?;
    write_json(&dir.join(REPORT_FILE), &output.report)?;
    write_json(&dir.join(TRACES_FILE), &output.traces)
}

pub fn load_run(dir: &Path) -> Result<RunOutput, HarnessError> {
    Ok(RunOutput { report: read_json(&dir.join(REPORT_FILE))?, traces: read_json(&dir.join(TRACES_FILE))? })
}

/// Scores stored traces against the benchmark answers by exact label match.
pub fn score_traces(bench: &Benchmark, traces: &[Option<EpisodeTrace>]) -> Result<RunReport, HarnessError> {
    if bench.items.len() != traces.len() {
        return Err(HarnessError::Io(format!("{} items but {} traces", bench.items.len(), traces.len())));
    }
    let items = bench
        .items
        .iter()
        .zip(traces)
        .map(|(item, trace)| ItemResult {
            id: item.id.clone(),
            category: item.category.clone(),
            answer: item.answer.clone(),
            predicted: trace.as_ref().map(|t| t.final_answer.clone()),
            correct: trace.as_ref().is_some_and(|t| t.errors.is_empty() && t.final_answer == item.answer),
            iterations: trace.as_ref().map_or(0, EpisodeTrace::iteration_count),
            forced: trace.as_ref().and_then(|t| t.forced),
            timings: trace.as_ref().map(|t| t.timings).unwrap_or_default(),
            failure: match trace {
                None => Some("no trace".into()),
                Some(t) if !t.errors.is_empty() => Some(t.errors.join("; ")),
                Some(_) => None,
            },
        })
        .collect();
    Ok(RunReport::from_items(items))
}
