//! Accuracy metrics over test engine outcomes.
//!
//! Undefined ratios (zero denominators) are `None`, serialized as `null`,
//! and left out of averages. There is deliberately no dynamic precision.

use serde::{Deserialize, Serialize};

use crate::engine::TestOutcome;
use crate::error::{Error, Result};

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

/// `|hit_set| / #prefetch`
pub fn static_precision(o: &TestOutcome) -> Option<f64> {
    ratio(o.hit_set.len() as f64, o.prefetch_count as f64)
}

/// `|hit_set| / (|hit_set| + |miss_set|)`
pub fn static_recall(o: &TestOutcome) -> Option<f64> {
    ratio(
        o.hit_set.len() as f64,
        (o.hit_set.len() + o.miss_set.len()) as f64,
    )
}

/// Static recall with requests that were eventually hit removed from the
/// miss set, i.e. `|hit_set| / |hit_set ∪ miss_set|`.
pub fn static_recall_strict(o: &TestOutcome) -> Option<f64> {
    ratio(
        o.hit_set.len() as f64,
        (o.hit_set.len() + o.strict_miss_count()) as f64,
    )
}

/// `#hit / (#hit + #miss)`
pub fn dynamic_recall(o: &TestOutcome) -> Option<f64> {
    ratio(o.hit_count as f64, (o.hit_count + o.miss_count) as f64)
}

/// Identifies the trace slice a report was computed on.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RunIdentity {
    pub user_id: String,
    pub training_len: usize,
    pub test_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub run: RunIdentity,
    pub static_precision: Option<f64>,
    pub static_recall: Option<f64>,
    pub static_recall_strict: Option<f64>,
    pub dynamic_recall: Option<f64>,
    pub normalized_static_recall: Option<f64>,
    pub normalized_dynamic_recall: Option<f64>,
}

impl MetricsReport {
    pub fn from_outcome(run: RunIdentity, o: &TestOutcome) -> Self {
        MetricsReport {
            run,
            static_precision: static_precision(o),
            static_recall: static_recall(o),
            static_recall_strict: static_recall_strict(o),
            dynamic_recall: dynamic_recall(o),
            normalized_static_recall: None,
            normalized_dynamic_recall: None,
        }
    }

    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::StaticPrecision => self.static_precision,
            Metric::StaticRecall => self.static_recall,
            Metric::StaticRecallStrict => self.static_recall_strict,
            Metric::DynamicRecall => self.dynamic_recall,
            Metric::NormalizedStaticRecall => self.normalized_static_recall,
            Metric::NormalizedDynamicRecall => self.normalized_dynamic_recall,
        }
    }
}

/// Divides the recalls of `target` by those of the Naive run on the same slice.
pub fn normalize_against_naive(
    target: &MetricsReport,
    naive: &MetricsReport,
) -> Result<MetricsReport> {
    if target.run != naive.run {
        return Err(Error::Contract(format!(
            "cannot normalize run {:?} against baseline run {:?}",
            target.run, naive.run
        )));
    }
    let norm = |t: Option<f64>, n: Option<f64>| match (t, n) {
        (Some(t), Some(n)) if n > 0.0 => Some(t / n),
        _ => None,
    };
    Ok(MetricsReport {
        normalized_static_recall: norm(target.static_recall, naive.static_recall),
        normalized_dynamic_recall: norm(target.dynamic_recall, naive.dynamic_recall),
        ..target.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    StaticPrecision,
    StaticRecall,
    StaticRecallStrict,
    DynamicRecall,
    NormalizedStaticRecall,
    NormalizedDynamicRecall,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::StaticPrecision,
        Metric::StaticRecall,
        Metric::StaticRecallStrict,
        Metric::DynamicRecall,
        Metric::NormalizedStaticRecall,
        Metric::NormalizedDynamicRecall,
    ];

    /// The three headline accuracy metrics.
    pub const PRIMARY: [Metric; 3] = [
        Metric::StaticPrecision,
        Metric::StaticRecall,
        Metric::DynamicRecall,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::StaticPrecision => "static_precision",
            Metric::StaticRecall => "static_recall",
            Metric::StaticRecallStrict => "static_recall_strict",
            Metric::DynamicRecall => "dynamic_recall",
            Metric::NormalizedStaticRecall => "normalized_static_recall",
            Metric::NormalizedDynamicRecall => "normalized_dynamic_recall",
        }
    }
}

/// Unweighted mean of the defined values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanValue {
    pub mean: Option<f64>,
    pub count: usize,
    pub undefined: usize,
}

pub fn mean_of(values: impl IntoIterator<Item = Option<f64>>) -> MeanValue {
    let (mut sum, mut count, mut undefined) = (0.0, 0usize, 0usize);
    for v in values {
        match v {
            Some(x) => {
                sum += x;
                count += 1;
            }
            None => undefined += 1,
        }
    }
    MeanValue {
        mean: (count > 0).then(|| sum / count as f64),
        count,
        undefined,
    }
}
