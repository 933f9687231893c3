use std::collections::{HashMap, VecDeque};

use serde::Serialize;

use super::{ordered, rank, slot, Scored};

/// A trie node: `count` is how often the path from the root to this node
/// occurred as a run of consecutive requests.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PpmNode {
    pub count: u64,
    #[serde(serialize_with = "ordered")]
    pub children: HashMap<String, PpmNode>,
}

impl PpmNode {
    fn child(&self, key: &str) -> Option<&PpmNode> {
        self.children.get(key)
    }

    fn walk(&self, path: &[&str]) -> Option<&PpmNode> {
        path.iter().try_fold(self, |node, k| node.child(k))
    }

    fn child_mut(&mut self, key: &str) -> &mut PpmNode {
        slot(&mut self.children, key)
    }

    pub fn depth(&self) -> usize {
        self.children
            .values()
            .map(|c| 1 + c.depth())
            .max()
            .unwrap_or(0)
    }
}

/// Order-`m` prediction-by-partial-match over a trie of request runs of
/// length at most `m + 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PpmModel {
    order: usize,
    threshold: f64,
    root: PpmNode,
    recent: VecDeque<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpmPrediction<'a> {
    pub candidates: Vec<Scored<'a>>,
    /// Length of the context suffix that matched; 0 when nothing matched.
    pub matched_order: usize,
}

impl PpmModel {
    pub fn new(order: usize, threshold: f64) -> Self {
        PpmModel {
            order,
            threshold,
            root: PpmNode::default(),
            recent: VecDeque::with_capacity(order + 1),
        }
    }

    /// Counts every run of length `1..=order + 1`, then assembles the trie
    /// shortest runs first.
    pub fn train(order: usize, threshold: f64, seq: &[&str]) -> Self {
        let mut runs: HashMap<&[&str], u64> = HashMap::new();
        for len in 1..=order + 1 {
            for run in seq.windows(len) {
                *runs.entry(run).or_default() += 1;
            }
        }
        let mut by_len: Vec<(&[&str], u64)> = runs.into_iter().collect();
        by_len.sort_by_key(|(run, _)| run.len());

        let mut m = PpmModel::new(order, threshold);
        m.root.count = seq.len() as u64;
        for (run, count) in by_len {
            let (last, prefix) = run.split_last().expect("runs are non-empty");
            let mut parent = &mut m.root;
            for k in prefix {
                parent = parent
                    .children
                    .get_mut(*k)
                    .expect("prefix runs are inserted first");
            }
            parent.child_mut(last).count = count;
        }
        let tail = seq.len().saturating_sub(order);
        m.recent.extend(seq[tail..].iter().map(|s| s.to_string()));
        m
    }

    pub fn update(&mut self, key: &str) {
        self.root.count += 1;
        let ctx: Vec<&str> = self.recent.iter().map(String::as_str).collect();
        // extend every active context suffix, the empty one included
        for start in 0..=ctx.len() {
            let mut node = &mut self.root;
            for k in &ctx[start..] {
                node = node.child_mut(k);
            }
            node.child_mut(key).count += 1;
        }
        self.recent.push_back(key.to_string());
        if self.recent.len() > self.order {
            self.recent.pop_front();
        }
    }

    /// Longest-match prediction: the longest trailing context suffix (at
    /// most `order` requests) that has been followed by anything decides.
    pub fn predict(&self, context: &[&str]) -> PpmPrediction<'_> {
        let longest = context.len().min(self.order);
        for k in (1..=longest).rev() {
            let suffix = &context[context.len() - k..];
            let Some(node) = self.root.walk(suffix) else {
                continue;
            };
            if node.children.is_empty() {
                continue;
            }
            let mut candidates: Vec<Scored<'_>> = node
                .children
                .iter()
                .map(|(key, child)| Scored {
                    key: key.as_str(),
                    score: child.count as f64 / node.count as f64,
                })
                .filter(|s| s.score >= self.threshold)
                .collect();
            rank(&mut candidates);
            return PpmPrediction {
                candidates,
                matched_order: k,
            };
        }
        PpmPrediction {
            candidates: Vec::new(),
            matched_order: 0,
        }
    }

    pub fn root(&self) -> &PpmNode {
        &self.root
    }

    /// Count of the node reached by `path`, 0 if absent.
    pub fn path_count(&self, path: &[&str]) -> u64 {
        self.root.walk(path).map_or(0, |n| n.count)
    }
}
