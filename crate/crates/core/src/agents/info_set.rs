use serde::{Deserialize, Serialize};

use crate::dsl::{Emission, Provenance, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemStatus {
    Active,
    Pruned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InformationItem {
    pub key: String,
    pub value: Value,
    pub provenance: Provenance,
    pub status: ItemStatus,
    /// Iteration in which the item entered the set.
    pub added: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pruned_at: Option<u32>,
}

impl InformationItem {
    pub fn is_active(&self) -> bool {
        self.status == ItemStatus::Active
    }

    /// The `- key = value` line used in prompts.
    pub fn prompt_line(&self) -> String {
        format!("- {} = {}", self.key, self.value)
    }
}

/// Every item ever added, in insertion order. Pruned items stay for the
/// trace but never reach a prompt.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InformationSet {
    pub items: Vec<InformationItem>,
    pub iteration: u32,
}

impl InformationSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// A set holding copies of `items`, all active.
    pub fn from_items(items: impl IntoIterator<Item = InformationItem>) -> Self {
        let items = items
            .into_iter()
            .map(|mut i| {
                i.status = ItemStatus::Active;
                i.pruned_at = None;
                i
            })
            .collect();
        Self { items, iteration: 0 }
    }

    pub fn active(&self) -> impl Iterator<Item = &InformationItem> {
        self.items.iter().filter(|i| i.is_active())
    }

    pub fn active_items(&self) -> Vec<InformationItem> {
        self.active().cloned().collect()
    }

    pub fn active_keys(&self) -> Vec<String> {
        self.active().map(|i| i.key.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.active().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<&InformationItem> {
        self.active().find(|i| i.key == key)
    }

    /// Adds emitted items. A new value for an active key replaces the old
    /// item, which is marked pruned.
    pub fn merge(&mut self, emitted: &[Emission]) {
        for e in emitted {
            let iteration = self.iteration;
            if let Some(old) = self.items.iter_mut().find(|i| i.is_active() && i.key == e.key) {
                old.status = ItemStatus::Pruned;
                old.pruned_at = Some(iteration);
            }
            self.items.push(InformationItem {
                key: e.key.clone(),
                value: e.value.clone(),
                provenance: e.provenance.clone(),
                status: ItemStatus::Active,
                added: iteration,
                pruned_at: None,
            });
        }
    }

    /// Prunes every active item whose key is not in `keep`. Returns the
    /// pruned keys.
    pub fn retain_keys(&mut self, keep: &[String]) -> Vec<String> {
        let iteration = self.iteration;
        let mut pruned = Vec::new();
        for item in self.items.iter_mut().filter(|i| i.is_active()) {
            if !keep.contains(&item.key) {
                item.status = ItemStatus::Pruned;
                item.pruned_at = Some(iteration);
                pruned.push(item.key.clone());
            }
        }
        pruned
    }

    /// Prompt block: one line per active item.
    pub fn render(&self) -> String {
        let lines: Vec<String> = self.active().map(InformationItem::prompt_line).collect();
        if lines.is_empty() {
            "(empty)".into()
        } else {
            lines.join("\n")
        }
    }
}
