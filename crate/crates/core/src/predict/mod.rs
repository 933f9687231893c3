//! History-based request predictors.
//!
//! Every model supports incremental update, and batch training produces the
//! same state as feeding the training requests one at a time through
//! [`PredictionModel::update`].

mod dg;
mod mp;
mod naive;
mod ppm;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

pub use dg::DgModel;
pub use mp::MpModel;
pub use naive::NaiveModel;
pub use ppm::{PpmModel, PpmNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "DG")]
    Dg,
    #[serde(rename = "PPM")]
    Ppm,
    #[serde(rename = "MP")]
    Mp,
    #[serde(rename = "Naive")]
    Naive,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Dg,
        Algorithm::Ppm,
        Algorithm::Mp,
        Algorithm::Naive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Dg => "DG",
            Algorithm::Ppm => "PPM",
            Algorithm::Mp => "MP",
            Algorithm::Naive => "Naive",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dg" => Ok(Algorithm::Dg),
            "ppm" => Ok(Algorithm::Ppm),
            "mp" => Ok(Algorithm::Mp),
            "naive" => Ok(Algorithm::Naive),
            other => Err(Error::Config(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// Parameters of a predictor. Fields that do not apply to the chosen
/// algorithm are ignored but still validated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub algorithm: Algorithm,
    /// Successor window for DG and MP.
    pub lookahead_window: usize,
    /// Minimum arc weight (DG) or conditional probability (PPM).
    pub confidence_threshold: f64,
    /// Maximum context length for PPM.
    pub ppm_order: usize,
    /// Number of successors MP predicts.
    pub top_n: usize,
}

pub const DEFAULT_LOOKAHEAD_WINDOW: usize = 4;
pub const DEFAULT_DG_THRESHOLD: f64 = 0.25;
pub const DEFAULT_PPM_THRESHOLD: f64 = 0.1;
pub const DEFAULT_PPM_ORDER: usize = 2;
pub const DEFAULT_TOP_N: usize = 5;

impl PredictorConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        PredictorConfig {
            algorithm,
            lookahead_window: DEFAULT_LOOKAHEAD_WINDOW,
            confidence_threshold: match algorithm {
                Algorithm::Ppm => DEFAULT_PPM_THRESHOLD,
                _ => DEFAULT_DG_THRESHOLD,
            },
            ppm_order: DEFAULT_PPM_ORDER,
            top_n: DEFAULT_TOP_N,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lookahead_window == 0 {
            return Err(Error::Config("lookahead window must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(Error::Config(format!(
                "confidence threshold {} outside [0, 1]",
                self.confidence_threshold
            )));
        }
        if self.ppm_order == 0 {
            return Err(Error::Config("PPM order must be at least 1".into()));
        }
        if self.top_n == 0 {
            return Err(Error::Config("top-n must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of trailing requests handed to `predict` by default.
    pub fn default_trigger_depth(&self) -> usize {
        match self.algorithm {
            Algorithm::Ppm => self.ppm_order,
            _ => 1,
        }
    }
}

/// A predicted request with the score it was ranked by.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored<'a> {
    pub key: &'a str,
    pub score: f64,
}

/// Orders by score descending, then key ascending.
pub(crate) fn rank(candidates: &mut [Scored<'_>]) {
    candidates.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.key.cmp(b.key)));
}

pub(crate) fn bump(map: &mut HashMap<String, u64>, key: &str) {
    match map.get_mut(key) {
        Some(c) => *c += 1,
        None => {
            map.insert(key.to_string(), 1);
        }
    }
}

/// `map[key]`, inserted as default first if absent, without allocating a
/// key for lookups that hit.
pub(crate) fn slot<'m, V: Default>(map: &'m mut HashMap<String, V>, key: &str) -> &'m mut V {
    if !map.contains_key(key) {
        map.insert(key.to_string(), V::default());
    }
    map.get_mut(key).expect("inserted above")
}

pub(crate) fn ordered<S, V>(
    map: &HashMap<String, V>,
    ser: S,
) -> std::result::Result<S::Ok, S::Error>
where
    S: Serializer,
    V: Serialize,
{
    map.iter().collect::<BTreeMap<_, _>>().serialize(ser)
}

pub(crate) fn ordered_nested<S>(
    map: &HashMap<String, HashMap<String, u64>>,
    ser: S,
) -> std::result::Result<S::Ok, S::Error>
where
    S: Serializer,
{
    map.iter()
        .map(|(k, v)| (k, v.iter().collect::<BTreeMap<_, _>>()))
        .collect::<BTreeMap<_, _>>()
        .serialize(ser)
}

/// A trained model of one of the four algorithms.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "algorithm", content = "state")]
pub enum PredictionModel {
    #[serde(rename = "DG")]
    Dg(DgModel),
    #[serde(rename = "PPM")]
    Ppm(PpmModel),
    #[serde(rename = "MP")]
    Mp(MpModel),
    #[serde(rename = "Naive")]
    Naive(NaiveModel),
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

impl PredictionModel {
    /// An untrained model.
    pub fn empty(config: &PredictorConfig) -> Self {
        match config.algorithm {
            Algorithm::Dg => PredictionModel::Dg(DgModel::new(
                config.lookahead_window,
                config.confidence_threshold,
            )),
            Algorithm::Ppm => {
                PredictionModel::Ppm(PpmModel::new(config.ppm_order, config.confidence_threshold))
            }
            Algorithm::Mp => {
                PredictionModel::Mp(MpModel::new(config.lookahead_window, config.top_n))
            }
            Algorithm::Naive => PredictionModel::Naive(NaiveModel::new()),
        }
    }

    /// Trains a model on a request sequence in one pass.
    pub fn train<S: AsRef<str>>(config: &PredictorConfig, training: &[S]) -> Self {
        let keys: Vec<&str> = training.iter().map(AsRef::as_ref).collect();
        match config.algorithm {
            Algorithm::Dg => PredictionModel::Dg(DgModel::train(
                config.lookahead_window,
                config.confidence_threshold,
                &keys,
            )),
            Algorithm::Ppm => PredictionModel::Ppm(PpmModel::train(
                config.ppm_order,
                config.confidence_threshold,
                &keys,
            )),
            Algorithm::Mp => {
                PredictionModel::Mp(MpModel::train(config.lookahead_window, config.top_n, &keys))
            }
            Algorithm::Naive => PredictionModel::Naive(NaiveModel::train(&keys)),
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        match self {
            PredictionModel::Dg(_) => Algorithm::Dg,
            PredictionModel::Ppm(_) => Algorithm::Ppm,
            PredictionModel::Mp(_) => Algorithm::Mp,
            PredictionModel::Naive(_) => Algorithm::Naive,
        }
    }

    /// Feeds one more observed request into the model.
    pub fn update(&mut self, key: &str) {
        match self {
            PredictionModel::Dg(m) => m.update(key),
            PredictionModel::Ppm(m) => m.update(key),
            PredictionModel::Mp(m) => m.update(key),
            PredictionModel::Naive(m) => m.update(key),
        }
    }

    /// Ranked predictions given the previous requests, most recent last.
    /// A context the model has never seen yields no predictions.
    pub fn predict_scored(&self, context: &[&str]) -> Vec<Scored<'_>> {
        match self {
            PredictionModel::Dg(m) => m.predict(context),
            PredictionModel::Ppm(m) => m.predict(context).candidates,
            PredictionModel::Mp(m) => m.predict(context),
            PredictionModel::Naive(m) => m.predict(),
        }
    }

    pub fn predict(&self, context: &[&str]) -> Vec<&str> {
        self.predict_scored(context)
            .into_iter()
            .map(|s| s.key)
            .collect()
    }

    /// Versioned JSON rendering of the model state; map keys are sorted.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Versioned<'a> {
            format_version: u32,
            model: &'a PredictionModel,
        }
        serde_json::to_string(&Versioned {
            format_version: MODEL_FORMAT_VERSION,
            model: self,
        })
        .expect("model state is always serializable")
    }
}
