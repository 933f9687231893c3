//! Training/trigger/test selection and the test engine replay loop.
//!
//! The test engine walks the test requests in order. For each request it
//! asks the model for predictions triggered by the preceding requests,
//! prefetches every predicted request not yet cached, scores the current
//! request as a hit or a miss against the cache, and finally feeds the
//! request back into the model. The cache is unbounded and nothing in it
//! ever expires.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predict::{PredictionModel, PredictorConfig};
use crate::trace::UserTrace;

pub const DEFAULT_TRAINING_RATIO: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub training_ratio: f64,
    /// Trailing requests handed to the predictor; `None` uses the
    /// algorithm's default (1, or the PPM order).
    pub trigger_depth: Option<usize>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            training_ratio: DEFAULT_TRAINING_RATIO,
            trigger_depth: None,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.training_ratio > 0.0 && self.training_ratio < 1.0) {
            return Err(Error::Config(format!(
                "training ratio {} outside (0, 1)",
                self.training_ratio
            )));
        }
        if self.trigger_depth == Some(0) {
            return Err(Error::Config("trigger depth must be at least 1".into()));
        }
        Ok(())
    }

    pub fn trigger_depth_for(&self, config: &PredictorConfig) -> usize {
        self.trigger_depth
            .unwrap_or_else(|| config.default_trigger_depth())
    }
}

/// Why a user produced no run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Skip {
    TooShort { len: usize },
}

impl std::fmt::Display for Skip {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Skip::TooShort { len } => write!(f, "trace of {len} requests is too short to split"),
        }
    }
}

/// Number of training requests for a trace of `n` requests.
pub fn training_len(n: usize, ratio: f64) -> usize {
    // nudge so that e.g. 0.7 * 10 lands on 7 despite rounding
    let k = (ratio * n as f64 + 1e-9).floor() as usize;
    k.min(n.saturating_sub(1))
}

/// First `floor(ratio * n)` requests train, the rest test.
pub fn split<T>(items: &[T], ratio: f64) -> std::result::Result<(&[T], &[T]), Skip> {
    if items.len() < 2 {
        return Err(Skip::TooShort { len: items.len() });
    }
    Ok(items.split_at(training_len(items.len(), ratio)))
}

/// What one replay of the test requests produced.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub cache_size: usize,
    /// Distinct requests found in the cache when issued.
    pub hit_set: BTreeSet<String>,
    /// Distinct requests absent from the cache when issued. A request may
    /// be in both sets: missed at first, hit later.
    pub miss_set: BTreeSet<String>,
    pub prefetch_count: u64,
    pub hit_count: u64,
    pub miss_count: u64,
}

impl TestOutcome {
    /// `|miss_set \ hit_set|`
    pub fn strict_miss_count(&self) -> usize {
        self.miss_set.difference(&self.hit_set).count()
    }

    pub fn requests_replayed(&self) -> u64 {
        self.hit_count + self.miss_count
    }
}

/// Replays `test` against `model`, which must already be trained.
/// `pre_context` holds the requests preceding the first test request.
pub fn run_test_engine(
    model: &mut PredictionModel,
    test: &[&str],
    pre_context: &[&str],
    trigger_depth: usize,
) -> TestOutcome {
    let mut cache: HashSet<String> = HashSet::new();
    let mut out = TestOutcome::default();
    let mut trigger: VecDeque<&str> = pre_context
        [pre_context.len().saturating_sub(trigger_depth)..]
        .iter()
        .copied()
        .collect();

    for &current in test {
        let context: Vec<&str> = trigger.iter().copied().collect();
        for candidate in model.predict(&context) {
            if !cache.contains(candidate) {
                cache.insert(candidate.to_string());
                out.prefetch_count += 1;
            }
        }
        if cache.contains(current) {
            out.hit_count += 1;
            if !out.hit_set.contains(current) {
                out.hit_set.insert(current.to_string());
            }
        } else {
            out.miss_count += 1;
            if !out.miss_set.contains(current) {
                out.miss_set.insert(current.to_string());
            }
        }
        model.update(current);

        trigger.push_back(current);
        if trigger.len() > trigger_depth {
            trigger.pop_front();
        }
    }
    out.cache_size = cache.len();
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserRun {
    pub outcome: TestOutcome,
    pub training_len: usize,
    pub test_len: usize,
    /// Wall-clock time spent training and replaying.
    pub elapsed: Duration,
}

/// Trains on `training`, then replays `test`. The trigger for the first
/// test request comes from `pre_context`, which need not equal `training`
/// (it differs when the training requests were pruned).
pub fn run_split(
    config: &PredictorConfig,
    training: &[&str],
    pre_context: &[&str],
    test: &[&str],
    trigger_depth: usize,
) -> UserRun {
    let started = Instant::now();
    let mut model = PredictionModel::train(config, training);
    let outcome = run_test_engine(&mut model, test, pre_context, trigger_depth);
    UserRun {
        outcome,
        training_len: training.len(),
        test_len: test.len(),
        elapsed: started.elapsed(),
    }
}

/// Splits one user's trace, trains, and replays the test slice.
pub fn run_user(
    trace: &UserTrace,
    config: &PredictorConfig,
    spec: &SplitSpec,
) -> std::result::Result<UserRun, Skip> {
    let keys = trace.url_keys();
    let (training, test) = split(&keys, spec.training_ratio)?;
    Ok(run_split(
        config,
        training,
        training,
        test,
        spec.trigger_depth_for(config),
    ))
}
