//! Straight-line reference implementation of the test engine and of the
//! four predictors, used to cross-check the incremental implementation.
//!
//! Nothing here keeps model state between steps: every prediction is
//! recomputed by scanning the full request history, and the cache is a
//! plain ordered set. It is quadratic or worse and only meant for small
//! traces.

#![allow(clippy::needless_range_loop)]

use std::collections::{BTreeMap, BTreeSet};

use crate::engine::TestOutcome;
use crate::predict::{Algorithm, PredictorConfig};

fn ranked(mut scored: Vec<(String, f64)>) -> Vec<String> {
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.into_iter().map(|(k, _)| k).collect()
}

/// Predictions for the request following `history`, given the trigger
/// `context` (the trailing requests of `history`).
pub fn predict_from_history(
    config: &PredictorConfig,
    history: &[String],
    context: &[String],
) -> Vec<String> {
    match config.algorithm {
        Algorithm::Naive => {
            let mut out: Vec<String> = Vec::new();
            for k in history {
                if !out.contains(k) {
                    out.push(k.clone());
                }
            }
            out
        }
        Algorithm::Dg => {
            let Some(src) = context.last() else {
                return vec![];
            };
            let w = config.lookahead_window;
            let mut occurrences = 0u64;
            let mut followed: BTreeMap<String, u64> = BTreeMap::new();
            for i in 0..history.len() {
                if &history[i] != src {
                    continue;
                }
                occurrences += 1;
                let mut after: BTreeSet<String> = BTreeSet::new();
                for j in i + 1..history.len() {
                    if j - i > w {
                        break;
                    }
                    after.insert(history[j].clone());
                }
                for t in after {
                    *followed.entry(t).or_insert(0) += 1;
                }
            }
            let mut scored = Vec::new();
            for (t, c) in followed {
                let weight = c as f64 / occurrences as f64;
                if weight >= config.confidence_threshold {
                    scored.push((t, weight));
                }
            }
            ranked(scored)
        }
        Algorithm::Mp => {
            let Some(src) = context.last() else {
                return vec![];
            };
            let w = config.lookahead_window;
            let mut counts: BTreeMap<String, u64> = BTreeMap::new();
            for i in 0..history.len() {
                if &history[i] != src {
                    continue;
                }
                for j in i + 1..history.len() {
                    if j - i > w {
                        break;
                    }
                    *counts.entry(history[j].clone()).or_insert(0) += 1;
                }
            }
            let mut out = ranked(counts.into_iter().map(|(k, c)| (k, c as f64)).collect());
            out.truncate(config.top_n);
            out
        }
        Algorithm::Ppm => {
            let longest = context.len().min(config.ppm_order);
            for k in (1..=longest).rev() {
                let suffix = &context[context.len() - k..];
                let mut occurrences = 0u64;
                let mut next: BTreeMap<String, u64> = BTreeMap::new();
                for end in k..=history.len() {
                    if &history[end - k..end] != suffix {
                        continue;
                    }
                    occurrences += 1;
                    if end < history.len() {
                        *next.entry(history[end].clone()).or_insert(0) += 1;
                    }
                }
                if next.is_empty() {
                    continue;
                }
                let mut scored = Vec::new();
                for (t, c) in next {
                    let p = c as f64 / occurrences as f64;
                    if p >= config.confidence_threshold {
                        scored.push((t, p));
                    }
                }
                return ranked(scored);
            }
            vec![]
        }
    }
}

/// Replays `test` after `training`, recomputing everything from scratch at
/// each step.
pub fn reference_test_engine(
    config: &PredictorConfig,
    training: &[String],
    test: &[String],
    trigger_depth: usize,
) -> TestOutcome {
    let mut history: Vec<String> = training.to_vec();
    let mut cache: BTreeSet<String> = BTreeSet::new();
    let mut outcome = TestOutcome::default();

    for current in test {
        let context_start = history.len().saturating_sub(trigger_depth);
        let context: Vec<String> = history[context_start..].to_vec();
        let predicted = predict_from_history(config, &history, &context);
        for candidate in predicted {
            if !cache.contains(&candidate) {
                cache.insert(candidate);
                outcome.prefetch_count += 1;
            }
        }
        if cache.contains(current) {
            outcome.hit_count += 1;
            outcome.hit_set.insert(current.clone());
        } else {
            outcome.miss_count += 1;
            outcome.miss_set.insert(current.clone());
        }
        history.push(current.clone());
    }
    outcome.cache_size = cache.len();
    outcome
}

/// Test requests that already occurred earlier in the trace.
pub fn previously_seen_count(training: &[String], test: &[String]) -> u64 {
    let mut count = 0;
    for (i, req) in test.iter().enumerate() {
        if training.contains(req) || test[..i].contains(req) {
            count += 1;
        }
    }
    count
}
