use std::collections::BTreeMap;

use crate::agents::prompts::parse_info_lines;
use crate::backends::{ChatBackend, ChatReply, ChatTurn, Result};
use crate::keys;
use crate::scene_sim::{motion_label, Calibration, Choice, QuestionIntent};

use super::{key_marker, TaggedPrompt};

/// Reply used when the scripted agent has nothing valid to say; the agent
/// loop treats it as malformed.
const NO_TAG: &str = "I cannot determine this from the available facts.";

/// Reasoning agent that answers from the facts in its prompt alone. It keeps
/// exactly the facts its plan needs, requests the first missing one and
/// decides as soon as the answer is computable.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedReasoner;

/// Answers correctly only while the prompt holds at most `capacity` facts;
/// larger sets distract it into a wrong choice.
#[derive(Debug, Clone, Copy)]
pub struct DistractibleReasoner {
    pub capacity: usize,
}

type Facts = BTreeMap<String, String>;

fn present(facts: &Facts, key: &str) -> bool {
    facts.get(key).is_some_and(|v| v != "absent")
}

fn choice_with_text<'a>(choices: &'a [Choice], text: &str) -> Option<&'a Choice> {
    choices.iter().find(|c| c.text.eq_ignore_ascii_case(text))
}

fn descriptor(value: &str, name: &str) -> Option<f64> {
    let inner = value.trim().strip_prefix('{')?.strip_suffix('}')?;
    inner.split(", ").find_map(|part| {
        let (k, v) = part.split_once(": ")?;
        (k == name).then(|| v.parse().ok()).flatten()
    })
}

/// The label the facts support, with a one-line justification.
fn evaluate(intent: &QuestionIntent, facts: &Facts, choices: &[Choice]) -> Option<(String, String)> {
    let key = |k: String| facts.get(&k).filter(|v| *v != "absent").map(|v| (k, v.clone()));
    let (choice, why) = match intent {
        QuestionIntent::Direction { anchor, target, .. } => {
            let (k, v) = key(keys::compass(target, anchor))?;
            (choice_with_text(choices, &v)?, format!("{k} reads {v}"))
        }
        QuestionIntent::CameraMotion { from, to } => {
            let (k, v) = key(keys::motion(*from, *to))?;
            let yaw = descriptor(&v, "rotate_right")?;
            (choice_with_text(choices, &motion_label(yaw)?)?, format!("{k} has rotate_right {yaw:.1}"))
        }
        QuestionIntent::Nearest { reference, candidates } => {
            let mut best: Option<(&String, f64)> = None;
            for c in candidates {
                let d: f64 = key(keys::distance(reference, c))?.1.parse().ok()?;
                if best.is_none_or(|(_, b)| d < b) {
                    best = Some((c, d));
                }
            }
            let (name, d) = best?;
            (choice_with_text(choices, name)?, format!("the {name} is the closest at {d:.3} m"))
        }
        QuestionIntent::Facing { observer, target } => {
            let (k, v) = key(keys::egocentric(target, observer))?;
            (choice_with_text(choices, &v)?, format!("{k} reads {v}"))
        }
    };
    Some((choice.label.clone(), why))
}

/// Keys the plan works from before the deciding fact exists.
fn plan_keys(intent: &QuestionIntent) -> Vec<String> {
    match intent {
        QuestionIntent::Direction { calibration, anchor, target } => {
            let mut out = vec![keys::position(anchor), keys::position(target)];
            if let Calibration::Object { anchor: a, target: t, .. } = calibration {
                out.push(keys::position(a));
                out.push(keys::position(t));
            }
            out
        }
        QuestionIntent::CameraMotion { from, to } => vec![keys::extrinsic(*from), keys::extrinsic(*to)],
        QuestionIntent::Nearest { reference, candidates } => {
            std::iter::once(reference).chain(candidates).map(|o| keys::position(o)).collect()
        }
        QuestionIntent::Facing { observer, target } => {
            vec![keys::position(observer), keys::position(target), keys::facing_dir(observer)]
        }
    }
}

fn plan_text(intent: &QuestionIntent) -> String {
    let steps: Vec<String> = match intent {
        QuestionIntent::Direction { calibration, anchor, target } => vec![
            format!("Locate the {anchor} and the {target}."),
            match calibration {
                Calibration::Object { anchor: a, target: t, .. } => format!("Fix north from where the {t} lies relative to the {a}."),
                Calibration::Camera { view, .. } => format!("Fix north from the viewing direction of image {}.", view + 1),
            },
            format!("Read the compass direction of the {target} from the {anchor}."),
        ],
        QuestionIntent::CameraMotion { from, to } => vec![
            format!("Recover the camera poses of image {} and image {}.", from + 1, to + 1),
            "Measure the yaw between the two cameras and match it to a choice.".into(),
        ],
        QuestionIntent::Nearest { reference, .. } => vec![
            format!("Measure the distance from the {reference} to each listed object."),
            "Pick the object with the smallest distance.".into(),
        ],
        QuestionIntent::Facing { observer, target } => vec![
            format!("Locate the {observer} and the {target}."),
            format!("Ground the facing direction of the {observer}."),
            format!("Classify the {target} against that facing direction."),
        ],
    };
    steps.iter().enumerate().map(|(i, s)| format!("{}. {s}", i + 1)).collect::<Vec<_>>().join("\n")
}

fn describe_key(key: &str) -> String {
    match keys::parse(key) {
        Some(keys::KeyKind::Compass { target, anchor }) => {
            format!("The compass direction of the {target} as seen from the {anchor}")
        }
        Some(keys::KeyKind::Motion(i, j)) => format!("The camera motion from image {} to image {}", i + 1, j + 1),
        Some(keys::KeyKind::Distance(a, b)) => format!("The distance between the {a} and the {b}"),
        Some(keys::KeyKind::FacingDir(o)) => format!("The facing direction of the {o}"),
        Some(keys::KeyKind::Egocentric { target, observer }) => {
            format!("Where the {target} lies relative to the facing direction of the {observer}")
        }
        _ => format!("The value of {key}"),
    }
}

/// The next fact to ask for: the first missing required key, with a facing
/// direction asked for before anything that depends on it.
fn missing_key(intent: &QuestionIntent, facts: &Facts) -> Option<String> {
    if let QuestionIntent::Facing { observer, target } = intent {
        if !present(facts, &keys::egocentric(target, observer)) && !present(facts, &keys::facing_dir(observer)) {
            return Some(keys::facing_dir(observer));
        }
    }
    intent.required_keys().into_iter().find(|k| !present(facts, k))
}

impl ScriptedReasoner {
    fn reply(prompt: &TaggedPrompt<'_>, facts: &Facts, mode: &str) -> String {
        let Some(intent) = &prompt.intent else {
            // Without a readable question only the keep-list has a safe answer.
            return match mode {
                "curate" => format!("<Plan>No usable plan.</Plan>\n<Keep>{}</Keep>", keep_json(facts.keys())),
                _ => NO_TAG.into(),
            };
        };
        let answer = evaluate(intent, facts, &prompt.choices);
        match mode {
            "curate" => {
                let required = intent.required_keys();
                let keep: Vec<&String> = if required.iter().all(|k| present(facts, k)) {
                    facts.keys().filter(|k| required.contains(k)).collect()
                } else {
                    let wanted: Vec<String> = required.into_iter().chain(plan_keys(intent)).collect();
                    facts.keys().filter(|k| wanted.contains(k)).collect()
                };
                format!("<Plan>\n{}\n</Plan>\n<Keep>{}</Keep>", plan_text(intent), keep_json(keep))
            }
            "decide" => match (answer, missing_key(intent, facts)) {
                (Some((_, why)), _) => format!("<Decide>{why}.</Decide>"),
                (None, Some(key)) => format!("<Request>{} {}</Request>", describe_key(&key), key_marker(&key)),
                (None, None) => NO_TAG.into(),
            },
            _ => answer.map_or_else(|| NO_TAG.into(), |(label, _)| format!("<Answer>{label}</Answer>")),
        }
    }
}

fn keep_json<'a>(keys: impl IntoIterator<Item = &'a String>) -> String {
    serde_json::to_string(&keys.into_iter().collect::<Vec<_>>()).expect("strings serialize")
}

fn read_prompt(history: &[ChatTurn]) -> Result<(TaggedPrompt<'_>, Facts, String)> {
    let prompt = TaggedPrompt::find(history, "reasoning", "<mode>")?;
    let mode = prompt.tag("mode").unwrap_or_default().to_string();
    if !matches!(mode.as_str(), "curate" | "decide" | "answer" | "forced") {
        return Err(crate::backends::BackendError::RuleMiss(format!("unknown mode '{mode}'")));
    }
    let facts = parse_info_lines(prompt.tag("information_set").unwrap_or_default()).into_iter().collect();
    Ok((prompt, facts, mode))
}

impl ChatBackend for ScriptedReasoner {
    fn chat(&self, history: &[ChatTurn]) -> Result<ChatReply> {
        let (prompt, facts, mode) = read_prompt(history)?;
        Ok(ChatReply::new(Self::reply(&prompt, &facts, &mode)))
    }
}

impl ChatBackend for DistractibleReasoner {
    fn chat(&self, history: &[ChatTurn]) -> Result<ChatReply> {
        let (prompt, facts, mode) = read_prompt(history)?;
        let answering = matches!(mode.as_str(), "answer" | "forced");
        if answering && facts.len() > self.capacity {
            let right = prompt.intent.as_ref().and_then(|i| evaluate(i, &facts, &prompt.choices)).map(|(l, _)| l);
            if let Some(wrong) = prompt.choices.iter().find(|c| Some(&c.label) != right.as_ref()) {
                return Ok(ChatReply::new(format!("<Answer>{}</Answer>", wrong.label)));
            }
        }
        Ok(ChatReply::new(ScriptedReasoner::reply(&prompt, &facts, &mode)))
    }
}
