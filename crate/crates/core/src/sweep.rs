//! Sliding-window training-size sweep.
//!
//! For a window size `x`, a fixed-size window slides along each user's
//! trace by `y` requests at a time. Every window is split into training and
//! test requests and evaluated with a fresh model, so many same-sized models
//! are built per user. Means per window size show how accuracy changes with
//! the amount of training data.

use std::collections::BTreeMap;
use std::ops::Range;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{run_split, training_len, TestOutcome};
use crate::error::{Error, Result};
use crate::metrics::{mean_of, MeanValue, Metric, MetricsReport, RunIdentity};
use crate::predict::{Algorithm, PredictorConfig};
use crate::trace::UserTrace;

pub const DEFAULT_WINDOW_SIZES: [usize; 11] =
    [50, 100, 200, 300, 400, 500, 600, 700, 800, 900, 1000];
pub const DEFAULT_CUTOFF_EPSILON: f64 = 0.005;

/// Metrics averaged per window size.
pub const SWEEP_METRICS: [Metric; 4] = [
    Metric::StaticPrecision,
    Metric::StaticRecall,
    Metric::StaticRecallStrict,
    Metric::DynamicRecall,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlidingDistance {
    Fixed(usize),
    /// Slide by the test length of the window.
    Auto,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum DistanceRepr {
    Fixed(usize),
    Named(String),
}

impl Serialize for SlidingDistance {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            SlidingDistance::Fixed(y) => DistanceRepr::Fixed(y),
            SlidingDistance::Auto => DistanceRepr::Named("auto".into()),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for SlidingDistance {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        match DistanceRepr::deserialize(de)? {
            DistanceRepr::Fixed(y) => Ok(SlidingDistance::Fixed(y)),
            DistanceRepr::Named(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl std::str::FromStr for SlidingDistance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(SlidingDistance::Auto);
        }
        s.parse().map(SlidingDistance::Fixed).map_err(|_| {
            Error::Config(format!(
                "sliding distance {s:?} is neither a number nor \"auto\""
            ))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlidingWindowSpec {
    pub window_sizes: Vec<usize>,
    pub training_ratio: f64,
    pub sliding_distance: SlidingDistance,
}

impl Default for SlidingWindowSpec {
    fn default() -> Self {
        SlidingWindowSpec {
            window_sizes: DEFAULT_WINDOW_SIZES.to_vec(),
            training_ratio: crate::engine::DEFAULT_TRAINING_RATIO,
            sliding_distance: SlidingDistance::Auto,
        }
    }
}

impl SlidingWindowSpec {
    pub fn validate(&self) -> Result<()> {
        if self.window_sizes.is_empty() {
            return Err(Error::Config("no window sizes given".into()));
        }
        if let Some(x) = self.window_sizes.iter().find(|&&x| x < 2) {
            return Err(Error::Config(format!("window size {x} is below 2")));
        }
        if !(self.training_ratio > 0.0 && self.training_ratio < 1.0) {
            return Err(Error::Config(format!(
                "training ratio {} outside (0, 1)",
                self.training_ratio
            )));
        }
        if self.sliding_distance == SlidingDistance::Fixed(0) {
            return Err(Error::Config("sliding distance must be at least 1".into()));
        }
        Ok(())
    }

    /// Slide for windows of size `x`; `auto` slides by the test length.
    pub fn distance_for(&self, x: usize) -> usize {
        match self.sliding_distance {
            SlidingDistance::Fixed(y) => y,
            SlidingDistance::Auto => (x - training_len(x, self.training_ratio)).max(1),
        }
    }
}

/// Windows `[0, x), [y, y + x), ...` that fit in `n` requests.
pub fn enumerate_windows(n: usize, x: usize, y: usize) -> Vec<Range<usize>> {
    assert!(
        x >= 2 && y >= 1,
        "window size must be >= 2 and distance >= 1"
    );
    if n < x {
        return Vec::new();
    }
    (0..=(n - x) / y).map(|i| i * y..i * y + x).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub user_id: String,
    pub window_size: usize,
    pub window_index: usize,
    pub start: usize,
    pub outcome: TestOutcome,
    pub metrics: MetricsReport,
    #[serde(skip)]
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeMeans {
    pub window_size: usize,
    pub models: usize,
    pub means: BTreeMap<Metric, MeanValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub algorithm: Algorithm,
    /// Ordered by window size, user, window index.
    pub records: Vec<WindowRecord>,
    pub means: Vec<SizeMeans>,
    /// Users too short for a window size, per size.
    pub skipped_users: BTreeMap<usize, usize>,
}

impl SweepResult {
    pub fn models_evaluated(&self) -> usize {
        self.records.len()
    }

    /// `(window size, mean)` for sizes where the metric is defined.
    pub fn mean_series(&self, metric: Metric) -> Vec<(usize, f64)> {
        self.means
            .iter()
            .filter_map(|s| {
                s.means
                    .get(&metric)
                    .and_then(|m| m.mean)
                    .map(|m| (s.window_size, m))
            })
            .collect()
    }
}

/// Evaluates a fresh model on every window of every user, for each size.
/// Runs on the current rayon pool; results do not depend on its size.
pub fn run_sweep(
    traces: &BTreeMap<String, UserTrace>,
    config: &PredictorConfig,
    spec: &SlidingWindowSpec,
) -> Result<SweepResult> {
    config.validate()?;
    spec.validate()?;
    let trigger_depth = config.default_trigger_depth();

    let mut sizes = spec.window_sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();

    let jobs: Vec<(usize, &UserTrace)> = sizes
        .iter()
        .flat_map(|&x| traces.values().map(move |t| (x, t)))
        .collect();

    let per_job: Vec<Vec<WindowRecord>> = jobs
        .par_iter()
        .map(|&(x, trace)| {
            let keys = trace.url_keys();
            let train_len = training_len(x, spec.training_ratio);
            enumerate_windows(keys.len(), x, spec.distance_for(x))
                .into_iter()
                .enumerate()
                .map(|(index, range)| {
                    let window = &keys[range.clone()];
                    let (training, test) = window.split_at(train_len);
                    let run = run_split(config, training, training, test, trigger_depth);
                    let identity = RunIdentity {
                        user_id: trace.user_id.clone(),
                        training_len: run.training_len,
                        test_len: run.test_len,
                    };
                    WindowRecord {
                        user_id: trace.user_id.clone(),
                        window_size: x,
                        window_index: index,
                        start: range.start,
                        metrics: MetricsReport::from_outcome(identity, &run.outcome),
                        outcome: run.outcome,
                        elapsed: run.elapsed,
                    }
                })
                .collect()
        })
        .collect();

    let mut skipped_users = BTreeMap::new();
    for (&(x, _), recs) in jobs.iter().zip(&per_job) {
        if recs.is_empty() {
            *skipped_users.entry(x).or_insert(0) += 1;
        }
    }
    let records: Vec<WindowRecord> = per_job.into_iter().flatten().collect();
    let means = sizes
        .iter()
        .map(|&x| {
            let of_size: Vec<&WindowRecord> =
                records.iter().filter(|r| r.window_size == x).collect();
            SizeMeans {
                window_size: x,
                models: of_size.len(),
                means: SWEEP_METRICS
                    .iter()
                    .map(|&m| (m, mean_of(of_size.iter().map(|r| r.metrics.get(m)))))
                    .collect(),
            }
        })
        .collect();

    Ok(SweepResult {
        algorithm: config.algorithm,
        records,
        means,
        skipped_users,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trend {
    Positive,
    Negative,
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffScan {
    pub cutoff: usize,
    pub trend: Trend,
}

/// Descriptive convergence point of a mean-per-size series: the smallest
/// size after which no successive change exceeds `epsilon`.
pub fn cutoff_scan(means: &[(usize, f64)], epsilon: f64) -> Result<CutoffScan> {
    if means.len() < 2 {
        return Err(Error::Contract(format!(
            "cut-off scan needs at least 2 window sizes, got {}",
            means.len()
        )));
    }
    let mut cutoff_idx = means.len() - 1;
    while cutoff_idx > 0 && (means[cutoff_idx].1 - means[cutoff_idx - 1].1).abs() <= epsilon {
        cutoff_idx -= 1;
    }
    let delta = means[means.len() - 1].1 - means[0].1;
    let trend = if delta.abs() <= epsilon {
        Trend::Flat
    } else if delta > 0.0 {
        Trend::Positive
    } else {
        Trend::Negative
    };
    Ok(CutoffScan {
        cutoff: means[cutoff_idx].0,
        trend,
    })
}
