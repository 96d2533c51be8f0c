use serde::{Deserialize, Serialize};

use crate::backends::ChatBackend;

use super::{ra_answer, AgentError, EpisodeConfig, EpisodeTrace, InformationItem, InformationSet};

const STEPS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    /// 1-based iteration whose set was used.
    pub step: usize,
    pub mean_size: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub episodes: usize,
    pub rows: Vec<AblationRow>,
}

/// The set the reasoner held at `step`, topped up with the items of the final
/// set it lacked. Every step is then equally sufficient and differs only in
/// how many extra items it carries.
fn normalized_set(trace: &EpisodeTrace, step: usize) -> InformationSet {
    let mut items: Vec<InformationItem> = trace.iterations[step].set_before.clone();
    for critical in &trace.final_set {
        items.retain(|i| i.key != critical.key);
        items.push(critical.clone());
    }
    InformationSet::from_items(items)
}

/// Re-asks `reasoner` on the normalized sets of every episode that decided in
/// exactly three iterations, and reports size and accuracy per step.
pub fn minimality_ablation(
    traces: &[EpisodeTrace],
    reasoner: &dyn ChatBackend,
    config: &EpisodeConfig,
) -> Result<AblationTable, AgentError> {
    let eligible: Vec<&EpisodeTrace> = traces
        .iter()
        .filter(|t| t.iteration_count() as usize == STEPS && t.forced.is_none() && t.question.answer.is_some())
        .collect();
    if eligible.is_empty() {
        return Err(AgentError::InsufficientEpisodes);
    }
    let mut sizes = [0usize; STEPS];
    let mut correct = [0usize; STEPS];
    for trace in &eligible {
        for step in 0..STEPS {
            let set = normalized_set(trace, step);
            sizes[step] += set.len();
            let reply = ra_answer(&set, &trace.question, reasoner, config, "answer");
            if !reply.fallback && reply.answer == trace.question.answer {
                correct[step] += 1;
            }
        }
    }
    let n = eligible.len() as f64;
    let rows = (0..STEPS)
        .map(|s| AblationRow { step: s + 1, mean_size: sizes[s] as f64 / n, accuracy: correct[s] as f64 / n })
        .collect();
    Ok(AblationTable { episodes: eligible.len(), rows })
}
