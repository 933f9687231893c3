//! Trace-driven evaluation of history-based web prefetching models.
//!
//! Per-user request traces are split into training and test parts; a model
//! is trained on the first and replayed request by request over the second,
//! prefetching into an unbounded cache. The resulting hit and miss sets feed
//! static and dynamic precision/recall metrics.

pub mod commands;
pub mod engine;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod oracle;
pub mod predict;
pub mod prune;
pub mod sweep;
pub mod synth;
pub mod trace;

pub use engine::{run_split, run_test_engine, run_user, split, SplitSpec, TestOutcome};
pub use error::{Error, Result};
pub use metrics::{Metric, MetricsReport};
pub use predict::{Algorithm, PredictionModel, PredictorConfig};
pub use trace::{Request, UserTrace};
