//! Multiple-choice question templates over a synthetic scene.
//!
//! Every template only emits a question when the ground-truth answer keeps a
//! safety margin against the errors the perception pipeline can make
//! (centroid offsets inside an object's footprint, the SOG angular bound), so
//! the oracle pipeline is guaranteed to reproduce the answer.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::keys;
use crate::labels::{CompassLabel, EgoLabel};

use super::{Result, SceneError, SceneObject, SyntheticScene};

/// Yaw buckets for motion answers, in degrees.
pub const MOTION_BUCKET_DEG: f64 = 15.0;
const MOTION_MAX_DEG: f64 = 90.0;
/// Minimum clearance between a true yaw and a bucket boundary.
const MOTION_BOUNDARY_MARGIN: f64 = 1.0;
/// Worst-case error of the two-stage arrow selection.
const SOG_BOUND_DEG: f64 = 11.25;
const ANGLE_SLACK_DEG: f64 = 2.0;
const DISTANCE_SLACK_M: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Direction,
    CameraMotion,
    Nearest,
    Facing,
}

impl Category {
    pub const ALL: [Category; 4] = [Self::Direction, Self::CameraMotion, Self::Nearest, Self::Facing];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Direction => "direction",
            Self::CameraMotion => "camera-motion",
            Self::Nearest => "nearest",
            Self::Facing => "facing",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub label: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedQuestion {
    pub id: String,
    pub views: Vec<usize>,
    pub text: String,
    pub choices: Vec<Choice>,
    pub answer: String,
    pub category: Category,
    pub required_keys: Vec<String>,
}

/// How the compass is pinned down for a direction question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Calibration {
    /// "the `target` is to the `label` of the `anchor`"
    Object { anchor: String, target: String, label: CompassLabel },
    /// "image `view` was taken facing `label`"
    Camera { view: usize, label: CompassLabel },
}

/// Structured reading of a generated question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QuestionIntent {
    Direction { calibration: Calibration, anchor: String, target: String },
    CameraMotion { from: usize, to: usize },
    Nearest { reference: String, candidates: Vec<String> },
    Facing { observer: String, target: String },
}

impl QuestionIntent {
    pub fn category(&self) -> Category {
        match self {
            Self::Direction { .. } => Category::Direction,
            Self::CameraMotion { .. } => Category::CameraMotion,
            Self::Nearest { .. } => Category::Nearest,
            Self::Facing { .. } => Category::Facing,
        }
    }

    /// Keys whose values alone determine the answer.
    pub fn required_keys(&self) -> Vec<String> {
        match self {
            Self::Direction { anchor, target, .. } => vec![keys::compass(target, anchor)],
            Self::CameraMotion { from, to } => vec![keys::motion(*from, *to)],
            Self::Nearest { reference, candidates } => {
                let mut ks: Vec<String> = candidates.iter().map(|c| keys::distance(reference, c)).collect();
                ks.sort();
                ks
            }
            Self::Facing { observer, target } => vec![keys::egocentric(target, observer)],
        }
    }

    /// Every object name the question mentions, in order of first mention.
    pub fn objects(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut push = |s: &String| {
            if !out.contains(s) {
                out.push(s.clone());
            }
        };
        match self {
            Self::Direction { calibration, anchor, target } => {
                if let Calibration::Object { anchor: a, target: t, .. } = calibration {
                    push(a);
                    push(t);
                }
                push(anchor);
                push(target);
            }
            Self::CameraMotion { .. } => {}
            Self::Nearest { reference, candidates } => {
                push(reference);
                candidates.iter().for_each(&mut push);
            }
            Self::Facing { observer, target } => {
                push(observer);
                push(target);
            }
        }
        out
    }
}

fn lower(label: CompassLabel) -> String {
    label.name().to_ascii_lowercase()
}

fn direction_text(cal: &Calibration, anchor: &str, target: &str) -> String {
    let premise = match cal {
        Calibration::Object { anchor: a, target: t, label } => {
            format!("Suppose the {t} is to the {} of the {a}.", lower(*label))
        }
        Calibration::Camera { view, label } => format!("Suppose image {} was taken facing {}.", view + 1, lower(*label)),
    };
    format!("{premise} In which direction is the {target} from the {anchor}?")
}

fn motion_text(from: usize, to: usize) -> String {
    format!("How did the camera rotate from image {} to image {}?", from + 1, to + 1)
}

fn nearest_text(reference: &str) -> String {
    format!("Which of the listed objects is closest to the {reference}?")
}

fn facing_text(observer: &str, target: &str) -> String {
    format!("Imagine standing at the {observer} and facing the same way it faces. Where is the {target}?")
}

/// Recovers the intent from a question produced by [`generate_question_set`].
/// Nearest-object candidates come from the choice texts.
pub fn parse_question(text: &str, choices: &[Choice]) -> Option<QuestionIntent> {
    let text = text.trim();
    if let Some(rest) = text.strip_prefix("Suppose ") {
        let (premise, query) = rest.split_once(". In which direction is the ")?;
        let (target, anchor) = query.strip_suffix('?')?.split_once(" from the ")?;
        let calibration = if let Some(cam) = premise.strip_prefix("image ") {
            let (idx, label) = cam.split_once(" was taken facing ")?;
            Calibration::Camera { view: parse_view(idx)?, label: CompassLabel::parse(label)? }
        } else {
            let p = premise.strip_prefix("the ")?;
            let (t, rest) = p.split_once(" is to the ")?;
            let (label, a) = rest.split_once(" of the ")?;
            Calibration::Object { anchor: a.into(), target: t.into(), label: CompassLabel::parse(label)? }
        };
        return Some(QuestionIntent::Direction { calibration, anchor: anchor.into(), target: target.into() });
    }
    if let Some(rest) = text.strip_prefix("How did the camera rotate from image ") {
        let (a, b) = rest.strip_suffix('?')?.split_once(" to image ")?;
        return Some(QuestionIntent::CameraMotion { from: parse_view(a)?, to: parse_view(b)? });
    }
    if let Some(rest) = text.strip_prefix("Which of the listed objects is closest to the ") {
        let reference = rest.strip_suffix('?')?.to_string();
        let candidates = choices.iter().map(|c| c.text.clone()).collect::<Vec<_>>();
        if candidates.is_empty() {
            return None;
        }
        return Some(QuestionIntent::Nearest { reference, candidates });
    }
    if let Some(rest) = text.strip_prefix("Imagine standing at the ") {
        let (observer, query) = rest.split_once(" and facing the same way it faces. Where is the ")?;
        return Some(QuestionIntent::Facing { observer: observer.into(), target: query.strip_suffix('?')?.into() });
    }
    None
}

fn parse_view(s: &str) -> Option<usize> {
    s.trim().parse::<usize>().ok()?.checked_sub(1)
}

/// Answer text for a signed yaw (positive = turned right), or `None` when the
/// yaw rounds outside the 15..=90 degree buckets.
pub fn motion_label(rotate_right_deg: f64) -> Option<String> {
    let bucket = (rotate_right_deg.abs() / MOTION_BUCKET_DEG).round() * MOTION_BUCKET_DEG;
    if !(MOTION_BUCKET_DEG..=MOTION_MAX_DEG).contains(&bucket) {
        return None;
    }
    let side = if rotate_right_deg > 0.0 { "right" } else { "left" };
    Some(format!("turned {side} by about {bucket:.0}°"))
}

fn all_motion_labels() -> Vec<String> {
    let mut out = Vec::new();
    for side in ["right", "left"] {
        let mut b = MOTION_BUCKET_DEG;
        while b <= MOTION_MAX_DEG {
            out.push(format!("turned {side} by about {b:.0}°"));
            b += MOTION_BUCKET_DEG;
        }
    }
    out
}

/// Ground-plane coordinates of a point: the floor is `y = 0`, so (x, z).
fn flat(p: &crate::geometry::Vec3) -> (f64, f64) {
    (p.x, p.z)
}

/// Heading in degrees: angle from +z toward +x, which is clockwise when seen
/// from above with up = -y.
fn heading(v: (f64, f64)) -> f64 {
    v.0.atan2(v.1).to_degrees()
}

fn wrap180(a: f64) -> f64 {
    let mut a = a % 360.0;
    if a > 180.0 {
        a -= 360.0;
    } else if a <= -180.0 {
        a += 360.0;
    }
    a
}

fn flat_between(a: &SceneObject, b: &SceneObject) -> (f64, f64) {
    let (pa, pb) = (flat(&a.center), flat(&b.center));
    (pb.0 - pa.0, pb.1 - pa.1)
}

fn len2(v: (f64, f64)) -> f64 {
    v.0.hypot(v.1)
}

/// Angular uncertainty of a ground direction between two objects whose
/// centroids may sit anywhere in their footprints.
fn pair_uncertainty(a: &SceneObject, b: &SceneObject) -> Option<f64> {
    let ratio = (a.footprint_radius() + b.footprint_radius()) / len2(flat_between(a, b));
    (ratio < 1.0).then(|| ratio.asin().to_degrees())
}

/// Ground-truth bearing of `target` from `anchor` under the calibration, in
/// degrees clockwise from north. Uses plain 2D headings, independent of the
/// rotation code the pipeline runs.
fn true_bearing(scene: &SyntheticScene, cal: &Calibration, anchor: &SceneObject, target: &SceneObject) -> f64 {
    let north_heading = match cal {
        Calibration::Object { anchor: a, target: t, label } => {
            let (a, t) = (scene.object(a).unwrap(), scene.object(t).unwrap());
            heading(flat_between(a, t)) - label.bearing()
        }
        Calibration::Camera { view, label } => {
            let f = scene.cameras[*view].pose.forward();
            heading((f.x, f.z)) - label.bearing()
        }
    };
    wrap180(heading(flat_between(anchor, target)) - north_heading).rem_euclid(360.0)
}

fn cardinal_for(bearing: f64) -> (CompassLabel, f64) {
    let idx = ((bearing / 90.0).round() as usize) % 4;
    let off = wrap180(bearing - idx as f64 * 90.0).abs();
    (CompassLabel::CARDINAL[idx], 45.0 - off)
}

/// Signed yaw from view `i` to view `j`, positive for a right turn.
fn true_yaw(scene: &SyntheticScene, i: usize, j: usize) -> f64 {
    let (fi, fj) = (scene.cameras[i].pose.forward(), scene.cameras[j].pose.forward());
    let (a, b) = ((fi.x, fi.z), (fj.x, fj.z));
    let angle = ((a.0 * b.0 + a.1 * b.1) / (len2(a) * len2(b))).clamp(-1.0, 1.0).acos().to_degrees();
    // (fi x fj) . up with up = (0, -1, 0) is -(fi x fj).y = -(a.1 b.0 - a.0 b.1)
    let cross_up = -(a.1 * b.0 - a.0 * b.1);
    if cross_up < 0.0 {
        angle
    } else {
        -angle
    }
}

fn true_ego(observer: &SceneObject, target: &SceneObject) -> Option<(EgoLabel, f64)> {
    let f = observer.facing?;
    let f2 = (f.x, f.z);
    // right = f x up with up = (0,-1,0) is (f.z, 0, -f.x) on the ground.
    let right = (f.z, -f.x);
    let v = flat_between(observer, target);
    let ang = (v.0 * right.0 + v.1 * right.1).atan2(v.0 * f2.0 + v.1 * f2.1).to_degrees();
    let margin = [45.0f64, 135.0].iter().map(|b| (ang.abs() - b).abs()).fold(f64::INFINITY, f64::min);
    Some((EgoLabel::from_angle(ang), margin))
}

struct Draft {
    views: Vec<usize>,
    text: String,
    truth: String,
    options: Vec<String>,
    intent: QuestionIntent,
}

fn try_direction(scene: &SyntheticScene, rng: &mut ChaCha8Rng) -> Option<Draft> {
    let n = scene.objects.len();
    if n < 2 {
        return None;
    }
    let label = CompassLabel::ALL[rng.random_range(0..8)];
    let (cal, cal_unc) = if n >= 4 && rng.random_bool(0.5) {
        let idx = rand::seq::index::sample(rng, n, 2);
        let (a, t) = (&scene.objects[idx.index(0)], &scene.objects[idx.index(1)]);
        let unc = pair_uncertainty(a, t)?;
        (Calibration::Object { anchor: a.name.clone(), target: t.name.clone(), label }, unc)
    } else {
        (Calibration::Camera { view: rng.random_range(0..scene.view_count()), label }, 0.0)
    };
    let idx = rand::seq::index::sample(rng, n, 2);
    let (anchor, target) = (&scene.objects[idx.index(0)], &scene.objects[idx.index(1)]);
    if let Calibration::Object { anchor: a, target: t, .. } = &cal {
        if (a == &anchor.name && t == &target.name) || (a == &target.name && t == &anchor.name) {
            return None;
        }
    }
    let unc = pair_uncertainty(anchor, target)?;
    let (truth, margin) = cardinal_for(true_bearing(scene, &cal, anchor, target));
    if margin <= unc + cal_unc + ANGLE_SLACK_DEG {
        return None;
    }
    Some(Draft {
        views: (0..scene.view_count()).collect(),
        text: direction_text(&cal, &anchor.name, &target.name),
        truth: truth.name().into(),
        options: CompassLabel::CARDINAL.iter().map(|l| l.name().to_string()).collect(),
        intent: QuestionIntent::Direction { calibration: cal, anchor: anchor.name.clone(), target: target.name.clone() },
    })
}

fn try_motion(scene: &SyntheticScene, rng: &mut ChaCha8Rng) -> Option<Draft> {
    let m = scene.view_count();
    if m < 2 {
        return None;
    }
    let i = rng.random_range(0..m - 1);
    let j = rng.random_range(i + 1..m);
    let yaw = true_yaw(scene, i, j);
    let truth = motion_label(yaw)?;
    let bucket = (yaw.abs() / MOTION_BUCKET_DEG).round() * MOTION_BUCKET_DEG;
    if (yaw.abs() - bucket).abs() > MOTION_BUCKET_DEG / 2.0 - MOTION_BOUNDARY_MARGIN {
        return None;
    }
    let mut others: Vec<String> = all_motion_labels().into_iter().filter(|l| *l != truth).collect();
    others.shuffle(rng);
    others.truncate(3);
    others.push(truth.clone());
    Some(Draft {
        views: (0..m).collect(),
        text: motion_text(i, j),
        truth,
        options: others,
        intent: QuestionIntent::CameraMotion { from: i, to: j },
    })
}

fn try_nearest(scene: &SyntheticScene, rng: &mut ChaCha8Rng) -> Option<Draft> {
    let n = scene.objects.len();
    if n < 3 {
        return None;
    }
    let k = rng.random_range(2..=3usize.min(n - 1));
    let idx = rand::seq::index::sample(rng, n, k + 1).into_vec();
    let reference = &scene.objects[idx[0]];
    let mut cands: Vec<(&SceneObject, f64)> = idx[1..]
        .iter()
        .map(|&c| (&scene.objects[c], (scene.objects[c].center - reference.center).norm()))
        .collect();
    cands.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (best, d1) = cands[0];
    let rx = reference.bounding_radius();
    let safe = cands[1..].iter().all(|(o, dk)| {
        dk - d1 > 2.0 * rx + best.bounding_radius() + o.bounding_radius() + DISTANCE_SLACK_M
    });
    if !safe {
        return None;
    }
    let candidates: Vec<String> = idx[1..].iter().map(|&c| scene.objects[c].name.clone()).collect();
    Some(Draft {
        views: (0..scene.view_count()).collect(),
        text: nearest_text(&reference.name),
        truth: best.name.clone(),
        options: candidates.clone(),
        intent: QuestionIntent::Nearest { reference: reference.name.clone(), candidates },
    })
}

fn try_facing(scene: &SyntheticScene, rng: &mut ChaCha8Rng) -> Option<Draft> {
    let facing: Vec<&SceneObject> = scene.objects.iter().filter(|o| o.facing.is_some()).collect();
    if facing.is_empty() || scene.objects.len() < 2 {
        return None;
    }
    let observer = facing[rng.random_range(0..facing.len())];
    let others: Vec<&SceneObject> = scene.objects.iter().filter(|o| o.name != observer.name).collect();
    let target = others[rng.random_range(0..others.len())];
    let unc = pair_uncertainty(observer, target)?;
    let (truth, margin) = true_ego(observer, target)?;
    if margin <= SOG_BOUND_DEG + unc + ANGLE_SLACK_DEG {
        return None;
    }
    Some(Draft {
        views: (0..scene.view_count()).collect(),
        text: facing_text(&observer.name, &target.name),
        truth: truth.phrase().into(),
        options: EgoLabel::ALL.iter().map(|l| l.phrase().to_string()).collect(),
        intent: QuestionIntent::Facing { observer: observer.name.clone(), target: target.name.clone() },
    })
}

const ATTEMPTS_PER_QUESTION: usize = 60;
/// Objects seen by fewer pixels than this in every view are not asked about.
const MIN_VISIBLE_PIXELS: usize = 40;

fn all_visible(scene: &SyntheticScene, names: &[String]) -> bool {
    names.iter().all(|n| {
        let Some(i) = scene.object_index(n) else { return false };
        (0..scene.view_count()).any(|v| scene.rendered(v).is_ok_and(|r| r.object_pixel_count(i) >= MIN_VISIBLE_PIXELS))
    })
}

/// Up to `count` questions cycling through the four categories. Fewer are
/// returned when the scene cannot support more distinct safe questions.
pub fn generate_question_set(scene: &SyntheticScene, count: usize, rng_seed: u64) -> Result<Vec<GeneratedQuestion>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    if scene.objects.len() < 2 && scene.view_count() < 2 {
        return Err(SceneError::InsufficientScene("need two objects or two views".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out: Vec<GeneratedQuestion> = Vec::new();
    let mut exhausted = [false; 4];
    let mut turn = 0usize;
    while out.len() < count && exhausted.iter().any(|e| !e) {
        let slot = turn % 4;
        turn += 1;
        if exhausted[slot] {
            continue;
        }
        let mut made = None;
        for _ in 0..ATTEMPTS_PER_QUESTION {
            let draft = match Category::ALL[slot] {
                Category::Direction => try_direction(scene, &mut rng),
                Category::CameraMotion => try_motion(scene, &mut rng),
                Category::Nearest => try_nearest(scene, &mut rng),
                Category::Facing => try_facing(scene, &mut rng),
            };
            if let Some(d) = draft {
                if !out.iter().any(|q| q.text == d.text) && all_visible(scene, &d.intent.objects()) {
                    made = Some(d);
                    break;
                }
            }
        }
        let Some(draft) = made else {
            exhausted[slot] = true;
            continue;
        };
        let mut options = draft.options;
        options.shuffle(&mut rng);
        let choices: Vec<Choice> = options
            .into_iter()
            .enumerate()
            .map(|(i, text)| Choice { label: ((b'A' + i as u8) as char).to_string(), text })
            .collect();
        let answer = choices.iter().find(|c| c.text == draft.truth).map(|c| c.label.clone()).expect("truth is a choice");
        out.push(GeneratedQuestion {
            id: format!("s{}-q{}", scene.rng_seed, out.len()),
            views: draft.views,
            text: draft.text,
            choices,
            answer,
            category: draft.intent.category(),
            required_keys: draft.intent.required_keys(),
        });
    }
    Ok(out)
}
