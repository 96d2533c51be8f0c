use std::fmt::Write;
use std::path::{Path, PathBuf};

use html_escape::encode_text;

use crate::agents::{Decision, EpisodeTrace, ForcedReason, InformationItem};

use super::HarnessError;

const STYLE: &str = "body{font-family:sans-serif;margin:2em;max-width:70em}\
pre{background:#f4f4f4;padding:.6em;overflow-x:auto;white-space:pre-wrap}\
section.iteration{border:1px solid #ccc;border-radius:4px;padding:0 1em 1em;margin:1em 0}\
.banner{background:#fff3cd;border:1px solid #d39e00;padding:.8em;font-weight:bold}\
del{color:#a00}table{border-collapse:collapse}td,th{border:1px solid #ccc;padding:.2em .6em;text-align:left}\
.ok{color:#070}.bad{color:#a00}";

fn page(title: &str, body: &str) -> String {
    format!(
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>{}</title>\n<style>{STYLE}</style>\n</head>\n<body>\n{body}</body>\n</html>\n",
        encode_text(title)
    )
}

/// File name for a trace page; ids are reduced to a safe character set.
pub fn trace_file_name(id: &str) -> String {
    let safe: String = id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
    format!("trace-{safe}.html")
}

fn item_list(out: &mut String, items: &[InformationItem], pruned: &[String]) {
    if items.is_empty() {
        out.push_str("<p><em>empty</em></p>\n");
        return;
    }
    out.push_str("<ul>\n");
    for item in items {
        let line = encode_text(&item.prompt_line()[2..]).to_string();
        if pruned.contains(&item.key) {
            let _ = writeln!(out, "<li><del>{line}</del></li>");
        } else {
            let _ = writeln!(out, "<li>{line}</li>");
        }
    }
    out.push_str("</ul>\n");
}

fn pre(out: &mut String, text: &str) {
    let _ = writeln!(out, "<pre>{}</pre>", encode_text(text));
}

/// One self-contained page per trace: program text, execution log, set
/// evolution with pruned items struck through, reasoner messages and answer.
pub fn render_trace_html(trace: &EpisodeTrace) -> String {
    let q = &trace.question;
    let mut out = String::new();
    let _ = writeln!(out, "<h1>{}</h1>", encode_text(&q.id));
    if let Some(reason) = trace.forced {
        let why = match reason {
            ForcedReason::IterationCap => "the iteration cap was reached before the reasoner decided",
            ForcedReason::Fallback => "no usable answer was produced and the lowest label was used",
        };
        let _ = writeln!(out, "<div class=\"banner\">Forced decision: {why}.</div>");
    }
    let _ = writeln!(out, "<p>{}</p>\n<ul>", encode_text(&q.text));
    for c in &q.choices {
        let _ = writeln!(out, "<li>{}. {}</li>", encode_text(&c.label), encode_text(&c.text));
    }
    out.push_str("</ul>\n");
    for it in &trace.iterations {
        let _ = writeln!(out, "<section class=\"iteration\">\n<h2>Iteration {}</h2>", it.index);
        let _ = writeln!(out, "<h3>Request</h3>\n<p>{}</p>", encode_text(&it.request));
        out.push_str("<h3>Program</h3>\n");
        pre(&mut out, it.program.as_deref().unwrap_or("(no program ran)"));
        if let Some(e) = &it.pa_error {
            let _ = writeln!(out, "<p class=\"bad\">{}</p>", encode_text(e));
        }
        out.push_str("<h3>Execution log</h3>\n<table>\n<tr><th>line</th><th>statement</th><th>outcome</th></tr>\n");
        for r in &it.log.records {
            let outcome = match &r.outcome {
                crate::dsl::Outcome::Ok { summary } => format!("<span class=\"ok\">{}</span>", encode_text(summary)),
                crate::dsl::Outcome::Error { message } => format!("<span class=\"bad\">{}</span>", encode_text(message)),
            };
            let _ = writeln!(out, "<tr><td>{}</td><td><code>{}</code></td><td>{outcome}</td></tr>", r.span.line, encode_text(&r.source));
        }
        out.push_str("</table>\n<h3>Information set</h3>\n");
        item_list(&mut out, &it.set_before, &it.pruned);
        if let Some(plan) = &it.plan {
            out.push_str("<h3>Plan</h3>\n");
            pre(&mut out, plan);
        }
        out.push_str("<h3>Reasoner messages</h3>\n");
        for m in &it.ra_messages {
            let _ = writeln!(out, "<p><strong>{}</strong></p>", m.role);
            pre(&mut out, &m.text);
        }
        let decision = match &it.decision {
            Some(Decision::Request { text }) => format!("request: {text}"),
            Some(Decision::Decide { rationale }) => format!("decide: {rationale}"),
            None => "no valid decision".into(),
        };
        let _ = writeln!(out, "<p><strong>Decision</strong> {}</p>", encode_text(&decision));
        for w in &it.warnings {
            let _ = writeln!(out, "<p class=\"bad\">{}</p>", encode_text(w));
        }
        out.push_str("</section>\n");
    }
    if !trace.forced_messages.is_empty() {
        out.push_str("<h2>Forced decision</h2>\n");
        for m in &trace.forced_messages {
            pre(&mut out, &m.text);
        }
    }
    out.push_str("<h2>Final set</h2>\n");
    item_list(&mut out, &trace.final_set, &[]);
    let verdict = match trace.is_correct() {
        Some(true) => " <span class=\"ok\">(correct)</span>".to_string(),
        Some(false) => format!(" <span class=\"bad\">(expected {})</span>", encode_text(q.answer.as_deref().unwrap_or(""))),
        None => String::new(),
    };
    let _ = writeln!(out, "<h2>Answer: {}{verdict}</h2>", encode_text(&trace.final_answer));
    page(&q.id, &out)
}

fn write(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}

/// Writes one page per trace plus `index.html` linking them. Returns every
/// written path, index last.
pub fn export_trace_html(traces: &[EpisodeTrace], dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io(format!("{}: {e}", dir.display())))?;
    let mut written = Vec::new();
    let mut index = String::from("<h1>Episode traces</h1>\n<table>\n<tr><th>id</th><th>iterations</th><th>answer</th><th>flags</th></tr>\n");
    for trace in traces {
        let name = trace_file_name(&trace.question.id);
        let path = dir.join(&name);
        write(&path, &render_trace_html(trace))?;
        written.push(path);
        let mark = match trace.is_correct() {
            Some(true) => "<span class=\"ok\">correct</span>",
            Some(false) => "<span class=\"bad\">wrong</span>",
            None => "",
        };
        let flag = if trace.forced.is_some() { "forced" } else { "" };
        let _ = writeln!(
            index,
            "<tr><td><a href=\"{name}\">{}</a></td><td>{}</td><td>{} {mark}</td><td>{flag}</td></tr>",
            encode_text(&trace.question.id),
            trace.iteration_count(),
            encode_text(&trace.final_answer)
        );
    }
    index.push_str("</table>\n");
    let path = dir.join("index.html");
    write(&path, &page("Episode traces", &index))?;
    written.push(path);
    Ok(written)
}
