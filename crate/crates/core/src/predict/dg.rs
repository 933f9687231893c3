use std::collections::{HashMap, VecDeque};

use serde::Serialize;

use super::{bump, ordered, ordered_nested, rank, slot, Scored};

/// Dependency graph: an arc `s -> t` counts the occurrences of `s` that are
/// followed by `t` within the next `window` requests. Each occurrence of `s`
/// contributes at most once per target, so arc weights
/// `arcs[s][t] / node_counts[s]` stay within `(0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DgModel {
    window: usize,
    threshold: f64,
    #[serde(serialize_with = "ordered")]
    node_counts: HashMap<String, u64>,
    #[serde(serialize_with = "ordered_nested")]
    arcs: HashMap<String, HashMap<String, u64>>,
    pending: VecDeque<String>,
}

impl DgModel {
    pub fn new(window: usize, threshold: f64) -> Self {
        DgModel {
            window,
            threshold,
            node_counts: HashMap::new(),
            arcs: HashMap::new(),
            pending: VecDeque::with_capacity(window + 1),
        }
    }

    /// Source-side pass: each position credits the distinct requests that
    /// follow it within the window.
    pub fn train(window: usize, threshold: f64, seq: &[&str]) -> Self {
        let mut m = DgModel::new(window, threshold);
        let mut followers: Vec<&str> = Vec::with_capacity(window);
        for (i, &src) in seq.iter().enumerate() {
            bump(&mut m.node_counts, src);
            let end = (i + window).min(seq.len() - 1);
            followers.clear();
            for &t in &seq[i + 1..=end] {
                if !followers.contains(&t) {
                    followers.push(t);
                }
            }
            let targets = slot(&mut m.arcs, src);
            for t in &followers {
                bump(targets, t);
            }
        }
        m.arcs.retain(|_, targets| !targets.is_empty());
        let tail = seq.len().saturating_sub(window);
        m.pending.extend(seq[tail..].iter().map(|s| s.to_string()));
        m
    }

    pub fn update(&mut self, target: &str) {
        for (i, src) in self.pending.iter().enumerate() {
            // credit only the first occurrence of `target` after this source
            let seen_since = self.pending.iter().skip(i + 1).any(|k| k == target);
            if !seen_since {
                match self.arcs.get_mut(src) {
                    Some(targets) => bump(targets, target),
                    None => {
                        self.arcs
                            .insert(src.clone(), HashMap::from([(target.to_string(), 1)]));
                    }
                }
            }
        }
        bump(&mut self.node_counts, target);
        self.pending.push_back(target.to_string());
        if self.pending.len() > self.window {
            self.pending.pop_front();
        }
    }

    pub fn predict(&self, context: &[&str]) -> Vec<Scored<'_>> {
        let Some(&src) = context.last() else {
            return Vec::new();
        };
        let (Some(&n), Some(targets)) = (self.node_counts.get(src), self.arcs.get(src)) else {
            return Vec::new();
        };
        let mut out: Vec<Scored<'_>> = targets
            .iter()
            .map(|(t, &c)| Scored {
                key: t.as_str(),
                score: c as f64 / n as f64,
            })
            .filter(|s| s.score >= self.threshold)
            .collect();
        rank(&mut out);
        out
    }

    pub fn node_count(&self, key: &str) -> u64 {
        self.node_counts.get(key).copied().unwrap_or(0)
    }

    pub fn arc_count(&self, src: &str, dst: &str) -> u64 {
        self.arcs
            .get(src)
            .and_then(|t| t.get(dst))
            .copied()
            .unwrap_or(0)
    }
}
