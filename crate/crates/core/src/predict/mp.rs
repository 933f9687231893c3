use std::collections::{HashMap, VecDeque};

use serde::Serialize;

use super::{bump, ordered_nested, rank, slot, Scored};

/// Most-popular successors: for every request, how often each request
/// followed it within `window` positions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MpModel {
    window: usize,
    top_n: usize,
    #[serde(serialize_with = "ordered_nested")]
    successors: HashMap<String, HashMap<String, u64>>,
    pending: VecDeque<String>,
}

impl MpModel {
    pub fn new(window: usize, top_n: usize) -> Self {
        MpModel {
            window,
            top_n,
            successors: HashMap::new(),
            pending: VecDeque::with_capacity(window + 1),
        }
    }

    pub fn train(window: usize, top_n: usize, seq: &[&str]) -> Self {
        let mut m = MpModel::new(window, top_n);
        for (i, &src) in seq.iter().enumerate() {
            let end = (i + window).min(seq.len() - 1);
            if i + 1 > end {
                continue;
            }
            let list = slot(&mut m.successors, src);
            for &t in &seq[i + 1..=end] {
                bump(list, t);
            }
        }
        let tail = seq.len().saturating_sub(window);
        m.pending.extend(seq[tail..].iter().map(|s| s.to_string()));
        m
    }

    pub fn update(&mut self, target: &str) {
        for src in &self.pending {
            match self.successors.get_mut(src) {
                Some(list) => bump(list, target),
                None => {
                    self.successors
                        .insert(src.clone(), HashMap::from([(target.to_string(), 1)]));
                }
            }
        }
        self.pending.push_back(target.to_string());
        if self.pending.len() > self.window {
            self.pending.pop_front();
        }
    }

    pub fn predict(&self, context: &[&str]) -> Vec<Scored<'_>> {
        let Some(list) = context.last().and_then(|&src| self.successors.get(src)) else {
            return Vec::new();
        };
        let mut out: Vec<Scored<'_>> = list
            .iter()
            .map(|(t, &c)| Scored {
                key: t.as_str(),
                score: c as f64,
            })
            .collect();
        rank(&mut out);
        out.truncate(self.top_n);
        out
    }

    pub fn successor_count(&self, src: &str, dst: &str) -> u64 {
        self.successors
            .get(src)
            .and_then(|l| l.get(dst))
            .copied()
            .unwrap_or(0)
    }
}
