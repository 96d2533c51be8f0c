use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{HarnessError, RunReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub title: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    /// Fixed-width plain-text rendering.
    pub fn to_text(&self) -> String {
        let cols = self.headers.len();
        let mut widths: Vec<usize> = self.headers.iter().map(String::len).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let padded: Vec<String> = (0..cols)
                .map(|i| format!("{:<w$}", cells.get(i).map_or("", String::as_str), w = widths[i]))
                .collect();
            padded.join("  ").trim_end().to_string()
        };
        let mut out = format!("{}\n{}\n", self.title, line(&self.headers));
        out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&line(row));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub tables: Vec<Table>,
    pub text: String,
}

fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

/// Accuracy and mean-iteration tables per category, plus the time spent per
/// iteration split into local tool execution and model calls.
pub fn stats_report(report: &RunReport) -> Result<StatsReport, HarnessError> {
    if report.items.is_empty() {
        return Err(HarnessError::NoItems);
    }
    let mut headers: Vec<String> = report.per_category.iter().map(|c| c.category.clone()).collect();
    headers.push("overall".into());
    let row = |f: &dyn Fn(f64, f64) -> String| {
        let mut cells: Vec<String> = report.per_category.iter().map(|c| f(c.accuracy, c.mean_iterations)).collect();
        cells.push(f(report.accuracy, report.mean_iterations));
        cells
    };
    let mut count_row: Vec<String> = report.per_category.iter().map(|c| c.count.to_string()).collect();
    count_row.push(report.items.len().to_string());

    let accuracy = Table {
        title: "Accuracy (%)".into(),
        headers: headers.clone(),
        rows: vec![row(&|a, _| pct(a)), count_row],
    };
    let iterations = Table {
        title: "Average iterations".into(),
        headers,
        rows: vec![row(&|_, it| format!("{it:.2}"))],
    };

    let iters = report.total_iterations.max(1) as f64;
    let n = report.items.len() as f64;
    let t = &report.mean_timings;
    let per_iter = |ms: f64| ms * n / iters;
    let local = per_iter(t.tool_ms);
    let model = per_iter(t.model_ms());
    let total = per_iter(t.total_ms);
    let share = |x: f64| if total > 0.0 { pct(x / total) } else { "-".into() };
    let timing = Table {
        title: "Time per iteration".into(),
        headers: vec!["phase".into(), "ms".into(), "share (%)".into()],
        rows: vec![
            vec!["local modules".into(), format!("{local:.2}"), share(local)],
            vec!["model calls".into(), format!("{model:.2}"), share(model)],
            vec!["  perception agent".into(), format!("{:.2}", per_iter(t.perception_model_ms)), share(per_iter(t.perception_model_ms))],
            vec!["  curation".into(), format!("{:.2}", per_iter(t.curation_ms)), share(per_iter(t.curation_ms))],
            vec!["  decision".into(), format!("{:.2}", per_iter(t.decision_ms)), share(per_iter(t.decision_ms))],
            vec!["total per iteration".into(), format!("{total:.2}"), share(total)],
        ],
    };
    let failed = report.items.iter().filter(|i| i.failure.is_some()).count();
    let mut text = String::new();
    for table in [&accuracy, &iterations, &timing] {
        text.push_str(&table.to_text());
        text.push('\n');
    }
    let _ = writeln!(text, "items: {}  failed: {failed}", report.items.len());
    Ok(StatsReport { tables: vec![accuracy, iterations, timing], text })
}
