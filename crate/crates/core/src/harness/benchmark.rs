use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::agents::Question;
use crate::scene_sim::{build_scene, generate_question_set, random_scene_spec, Category, Choice, RandomSceneConfig, SceneSpec};

use super::HarnessError;

pub const BENCHMARK_VERSION: u32 = 1;

/// A benchmark split: the declared category tags, inline synthetic scenes
/// that items may reference, and the items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub version: u32,
    pub categories: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub scenes: BTreeMap<String, SceneSpec>,
    pub items: Vec<BenchmarkItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkItem {
    pub id: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<PathBuf>,
    /// Key into [`Benchmark::scenes`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<String>,
    pub question: String,
    pub choices: Vec<Choice>,
    pub answer: String,
    pub category: String,
}

impl BenchmarkItem {
    pub fn to_question(&self) -> Question {
        Question {
            id: self.id.clone(),
            text: self.question.clone(),
            choices: self.choices.clone(),
            answer: Some(self.answer.clone()),
            category: Some(self.category.clone()),
        }
    }
}

fn default_categories() -> Vec<String> {
    Category::ALL.iter().map(|c| c.as_str().to_string()).collect()
}

/// Structural checks on the raw document, so errors name the offending field.
fn check_shape(doc: &Json, path: &Path) -> Result<(), HarnessError> {
    let schema = |field: String| HarnessError::Schema { path: path.to_path_buf(), field };
    let items = doc.get("items").and_then(Json::as_array).ok_or_else(|| schema("items".into()))?;
    for (i, item) in items.iter().enumerate() {
        let field = |name: &str| format!("items[{i}].{name}");
        for name in ["id", "question", "answer", "category"] {
            if !item.get(name).is_some_and(Json::is_string) {
                return Err(schema(field(name)));
            }
        }
        let choices = item.get("choices").and_then(Json::as_array).filter(|c| !c.is_empty());
        let choices = choices.ok_or_else(|| schema(field("choices")))?;
        for (j, c) in choices.iter().enumerate() {
            for name in ["label", "text"] {
                if !c.get(name).is_some_and(Json::is_string) {
                    return Err(schema(format!("items[{i}].choices[{j}].{name}")));
                }
            }
        }
        let has_images = item.get("images").and_then(Json::as_array).is_some_and(|a| !a.is_empty());
        if !has_images && !item.get("scene").is_some_and(Json::is_string) {
            return Err(schema(field("images")));
        }
    }
    Ok(())
}

fn validate(bench: &Benchmark, path: &Path) -> Result<(), HarnessError> {
    let schema = |field: String| HarnessError::Schema { path: path.to_path_buf(), field };
    if bench.version != BENCHMARK_VERSION {
        return Err(schema("version".into()));
    }
    let mut ids = BTreeSet::new();
    for (i, item) in bench.items.iter().enumerate() {
        let field = |name: &str| format!("items[{i}].{name}");
        if item.id.trim().is_empty() || !ids.insert(item.id.as_str()) {
            return Err(schema(field("id")));
        }
        let labels: BTreeSet<&str> = item.choices.iter().map(|c| c.label.as_str()).collect();
        if labels.len() != item.choices.len() {
            return Err(schema(field("choices")));
        }
        if !labels.contains(item.answer.as_str()) {
            return Err(schema(field("answer")));
        }
        if !bench.categories.contains(&item.category) {
            return Err(schema(field("category")));
        }
        if let Some(scene) = &item.scene {
            if !bench.scenes.contains_key(scene) {
                return Err(schema(field("scene")));
            }
        }
    }
    Ok(())
}

/// Parses a benchmark document from JSON text. `path` only labels errors.
pub fn parse_benchmark(text: &str, path: &Path) -> Result<Benchmark, HarnessError> {
    let schema = |field: &str| HarnessError::Schema { path: path.to_path_buf(), field: field.into() };
    let mut doc: Json = serde_json::from_str(text).map_err(|e| schema(&format!("document ({e})")))?;
    check_shape(&doc, path)?;
    let obj = doc.as_object_mut().ok_or_else(|| schema("document"))?;
    obj.entry("version").or_insert(Json::from(BENCHMARK_VERSION));
    obj.entry("categories").or_insert_with(|| Json::from(default_categories()));
    if let Some(scenes) = obj.get("scenes").and_then(Json::as_object) {
        for (name, spec) in scenes {
            serde_json::from_value::<SceneSpec>(spec.clone()).map_err(|_| schema(&format!("scenes.{name}")))?;
        }
    }
    let bench: Benchmark = serde_json::from_value(doc).map_err(|e| schema(&format!("document ({e})")))?;
    validate(&bench, path)?;
    Ok(bench)
}

pub fn load_benchmark(path: &Path) -> Result<Benchmark, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    parse_benchmark(&text, path)
}

pub fn save_benchmark(bench: &Benchmark, path: &Path) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(bench).expect("benchmark serializes");
    std::fs::write(path, text).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}

/// `count` generated questions over random scenes, `per_scene` at most from
/// each scene. Scene `k` uses seed `seed + k`.
pub fn generate_synthetic(
    count: usize,
    per_scene: usize,
    seed: u64,
    config: &RandomSceneConfig,
) -> Result<Benchmark, HarnessError> {
    let mut bench = Benchmark {
        version: BENCHMARK_VERSION,
        categories: default_categories(),
        scenes: BTreeMap::new(),
        items: Vec::new(),
    };
    let per_scene = per_scene.max(1);
    let scene_err = |e: crate::scene_sim::SceneError| HarnessError::Scene(e.to_string());
    let mut k = 0u64;
    while bench.items.len() < count {
        if k > 10 * count as u64 + 10 {
            return Err(HarnessError::Scene(format!("only {} questions after {k} scenes", bench.items.len())));
        }
        let scene_seed = seed.wrapping_add(k);
        k += 1;
        let spec = random_scene_spec(config, scene_seed).map_err(scene_err)?;
        let scene = build_scene(&spec).map_err(scene_err)?;
        let want = per_scene.min(count - bench.items.len());
        let questions = generate_question_set(&scene, want, scene_seed).map_err(scene_err)?;
        if questions.is_empty() {
            continue;
        }
        let scene_id = format!("scene{scene_seed}");
        for q in questions {
            bench.items.push(BenchmarkItem {
                id: q.id,
                images: Vec::new(),
                scene: Some(scene_id.clone()),
                question: q.text,
                choices: q.choices,
                answer: q.answer,
                category: q.category.as_str().to_string(),
            });
        }
        bench.scenes.insert(scene_id, spec);
    }
    Ok(bench)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(id: &str) -> Json {
        serde_json::json!({
            "id": id, "scene": "s", "question": "q?", "category": "nearest", "answer": "A",
            "choices": [{"label": "A", "text": "chair"}, {"label": "B", "text": "lamp"}]
        })
    }

    fn doc(items: Vec<Json>) -> String {
        let spec = serde_json::to_value(random_scene_spec(&RandomSceneConfig::default(), 1).unwrap()).unwrap();
        serde_json::json!({"scenes": {"s": spec}, "items": items}).to_string()
    }

    #[test]
    fn three_items_load() {
        let b = parse_benchmark(&doc(vec![item("a"), item("b"), item("c")]), Path::new("b.json")).unwrap();
        assert_eq!(b.items.len(), 3);
        assert_eq!(b.categories.len(), 4);
    }

    fn field_of(text: &str) -> String {
        match parse_benchmark(text, Path::new("b.json")) {
            Err(HarnessError::Schema { field, .. }) => field,
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn schema_errors_name_the_field() {
        let mut missing = item("a");
        missing.as_object_mut().unwrap().remove("answer");
        assert_eq!(field_of(&doc(vec![missing])), "items[0].answer");
        assert_eq!(field_of(&doc(vec![item("a"), item("a")])), "items[1].id");
        let mut bad = item("a");
        bad["answer"] = "Z".into();
        assert_eq!(field_of(&doc(vec![bad])), "items[0].answer");
        let mut cat = item("a");
        cat["category"] = "weather".into();
        assert_eq!(field_of(&doc(vec![cat])), "items[0].category");
        let mut scene = item("a");
        scene["scene"] = "nowhere".into();
        assert_eq!(field_of(&doc(vec![scene])), "items[0].scene");
        assert_eq!(field_of("{}"), "items");
    }

    #[test]
    fn synthetic_round_trips_through_a_file() {
        let b = generate_synthetic(6, 3, 11, &RandomSceneConfig::default()).unwrap();
        assert_eq!(b.items.len(), 6);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.json");
        save_benchmark(&b, &path).unwrap();
        assert_eq!(load_benchmark(&path).unwrap(), b);
    }
}
