use std::collections::HashSet;

use serde::Serialize;

use super::Scored;

/// Predicts every request observed so far, in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct NaiveModel {
    seen: Vec<String>,
    #[serde(skip)]
    index: HashSet<String>,
}

impl NaiveModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn train(seq: &[&str]) -> Self {
        let mut index = HashSet::new();
        let seen = seq
            .iter()
            .filter(|k| index.insert(k.to_string()))
            .map(|k| k.to_string())
            .collect();
        NaiveModel { seen, index }
    }

    pub fn update(&mut self, key: &str) {
        if !self.index.contains(key) {
            self.index.insert(key.to_string());
            self.seen.push(key.to_string());
        }
    }

    pub fn predict(&self) -> Vec<Scored<'_>> {
        self.seen
            .iter()
            .map(|k| Scored {
                key: k.as_str(),
                score: 1.0,
            })
            .collect()
    }

    pub fn seen(&self) -> &[String] {
        &self.seen
    }
}
