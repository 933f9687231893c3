//! Implementation of the command-line subcommands: run configuration,
//! report assembly and output files.
//!
//! Reports are deterministic for a given input and configuration. Wall-clock
//! measurements and the worker count live in a separate `timing` section so
//! that report bodies can be compared byte for byte.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{run_split, split, Skip, SplitSpec, TestOutcome};
use crate::error::{Error, Result};
use crate::ingest::{
    load_traces, remove_outlier_users, LoadOptions, LoadSummary, LoadedTraces, LogFormat,
    OutlierReport,
};
use crate::metrics::{
    mean_of, normalize_against_naive, MeanValue, Metric, MetricsReport, RunIdentity,
};
use crate::oracle;
use crate::predict::{Algorithm, PredictionModel, PredictorConfig};
use crate::prune::{domain_cutoff_filter, prune, PruneSpec};
use crate::sweep::{
    cutoff_scan, run_sweep, CutoffScan, SlidingWindowSpec, SweepResult, SWEEP_METRICS,
};
use crate::synth;
use crate::trace::{repetition_stats, Request, UserTrace};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Optional per-run overrides of the predictor defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictorOverrides {
    pub lookahead_window: Option<usize>,
    pub confidence_threshold: Option<f64>,
    pub ppm_order: Option<usize>,
    pub top_n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub input: PathBuf,
    pub format: LogFormat,
    pub algorithms: Vec<Algorithm>,
    pub split: SplitSpec,
    pub predictor: PredictorOverrides,
    pub prune: Option<PruneSpec>,
    pub sliding_window: SlidingWindowSpec,
    pub domain_cutoff: Option<f64>,
    pub min_requests: usize,
    pub strict: bool,
    pub cutoff_epsilon: f64,
    pub seed: u64,
    /// Does not influence results; reported under `timing`.
    #[serde(skip)]
    pub workers: usize,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn new(input: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            input: input.into(),
            format: LogFormat::Csv,
            algorithms: Algorithm::ALL.to_vec(),
            split: SplitSpec::default(),
            predictor: PredictorOverrides::default(),
            prune: None,
            sliding_window: SlidingWindowSpec::default(),
            domain_cutoff: None,
            min_requests: crate::ingest::DEFAULT_MIN_REQUESTS,
            strict: false,
            cutoff_epsilon: crate::sweep::DEFAULT_CUTOFF_EPSILON,
            seed: 0,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            output_dir: output_dir.into(),
        }
    }

    pub fn predictor_config(&self, algorithm: Algorithm) -> PredictorConfig {
        let mut c = PredictorConfig::new(algorithm);
        let o = &self.predictor;
        if let Some(w) = o.lookahead_window {
            c.lookahead_window = w;
        }
        if let Some(t) = o.confidence_threshold {
            c.confidence_threshold = t;
        }
        if let Some(m) = o.ppm_order {
            c.ppm_order = m;
        }
        if let Some(n) = o.top_n {
            c.top_n = n;
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(Error::Config("select at least one algorithm".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("worker count must be at least 1".into()));
        }
        for &a in &self.algorithms {
            self.predictor_config(a).validate()?;
        }
        self.split.validate()?;
        if let Some(p) = &self.prune {
            p.validate()?;
        }
        if let Some(c) = self.domain_cutoff {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::Config(format!("domain cut-off {c} outside [0, 1]")));
            }
        }
        Ok(())
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", self.workers)))
    }

    fn selected(&self) -> Vec<Algorithm> {
        let set: BTreeSet<Algorithm> = self.algorithms.iter().copied().collect();
        set.into_iter().collect()
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn millis(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Min/avg/max of per-model running times, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub models: usize,
    pub min_ms: f64,
    pub avg_ms: f64,
    pub max_ms: f64,
}

impl TimingStats {
    pub fn of(durations: impl IntoIterator<Item = Duration>) -> Option<Self> {
        let ms: Vec<f64> = durations.into_iter().map(millis).collect();
        if ms.is_empty() {
            return None;
        }
        Some(TimingStats {
            models: ms.len(),
            min_ms: ms.iter().copied().fold(f64::INFINITY, f64::min),
            avg_ms: ms.iter().sum::<f64>() / ms.len() as f64,
            max_ms: ms.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub workers: usize,
    pub wall_ms: f64,
    /// Keyed by algorithm, or `algorithm/variant`.
    pub per_model: BTreeMap<String, TimingStats>,
}

// ---------------------------------------------------------------- loading

fn is_trace_file(path: &Path) -> Option<LogFormat> {
    match path.extension()?.to_str()? {
        "csv" => Some(LogFormat::Csv),
        "jsonl" => Some(LogFormat::Jsonl),
        _ => None,
    }
}

/// Loads traces from a log file, or from every `.csv`/`.jsonl` file of a
/// directory (its `traces/` subdirectory when present, as written by
/// `ingest`).
pub fn load_input(config: &RunConfig) -> Result<LoadedTraces> {
    let opts = LoadOptions {
        strict: config.strict,
    };
    let input = &config.input;
    if !input.is_dir() {
        let loaded = load_traces(input, config.format, opts)?;
        if loaded.traces.is_empty() {
            return Err(Error::NoTraces(input.clone()));
        }
        return Ok(loaded);
    }
    let dir = if input.join("traces").is_dir() {
        input.join("traces")
    } else {
        input.clone()
    };
    let mut files: Vec<(PathBuf, LogFormat)> = fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter_map(|p| is_trace_file(&p).map(|f| (p, f)))
        .collect();
    files.sort_by(|a, b| a.0.cmp(&b.0));

    let mut per_user: BTreeMap<String, Vec<Request>> = BTreeMap::new();
    let mut summary = LoadSummary::default();
    for (path, format) in files {
        let loaded = load_traces(&path, format, opts)?;
        summary.rows_read += loaded.summary.rows_read;
        summary.get_retained += loaded.summary.get_retained;
        summary.non_get_dropped += loaded.summary.non_get_dropped;
        summary.malformed_skipped += loaded.summary.malformed_skipped;
        summary.issues.extend(loaded.summary.issues);
        for (user, trace) in loaded.traces {
            per_user
                .entry(user)
                .or_default()
                .extend(trace.requests().iter().cloned());
        }
    }
    if per_user.is_empty() {
        return Err(Error::NoTraces(dir));
    }
    let traces = per_user
        .into_iter()
        .map(|(u, reqs)| UserTrace::new(u.clone(), reqs).map(|t| (u, t)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    summary.users = traces.len();
    Ok(LoadedTraces { traces, summary })
}

// ---------------------------------------------------------------- ingest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub schema_version: u32,
    pub load: LoadSummary,
    pub outliers: OutlierReport,
    pub users_kept: usize,
    pub requests_kept: usize,
    /// Written trace files, relative to the output directory.
    pub trace_files: Vec<String>,
}

fn file_stem_for(user: &str) -> String {
    let stem: String = user
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect();
    if stem.is_empty() || stem.starts_with('.') {
        format!("u{stem}")
    } else {
        stem
    }
}

pub fn write_trace_csv(path: &Path, trace: &UserTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["user_id", "timestamp_ms", "method", "url"])?;
    for r in trace.requests() {
        w.write_record([
            r.user_id.as_str(),
            &r.timestamp.to_string(),
            "GET",
            r.url_key.as_str(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Loads a raw log, drops outlier users and writes one normalized trace
/// file per remaining user plus `ingest_summary.json`.
pub fn cmd_ingest(config: &RunConfig) -> Result<IngestSummary> {
    let loaded = load_traces(
        &config.input,
        config.format,
        LoadOptions {
            strict: config.strict,
        },
    )?;
    if loaded.traces.is_empty() {
        return Err(Error::NoTraces(config.input.clone()));
    }
    let (kept, outliers) = remove_outlier_users(loaded.traces, config.min_requests)?;

    let trace_dir = config.output_dir.join("traces");
    create_dir(&trace_dir)?;
    let mut used = BTreeSet::new();
    let mut trace_files = Vec::new();
    for (user, trace) in &kept {
        let base = file_stem_for(user);
        let mut stem = base.clone();
        let mut n = 1;
        while !used.insert(stem.clone()) {
            stem = format!("{base}-{n}");
            n += 1;
        }
        let name = format!("traces/{stem}.csv");
        write_trace_csv(&config.output_dir.join(&name), trace)?;
        trace_files.push(name);
    }
    let summary = IngestSummary {
        schema_version: REPORT_SCHEMA_VERSION,
        load: loaded.summary,
        outliers,
        users_kept: kept.len(),
        requests_kept: kept.values().map(UserTrace::len).sum(),
        trace_files,
    };
    write_json(&config.output_dir.join("ingest_summary.json"), &summary)?;
    Ok(summary)
}

// ---------------------------------------------------------------- stats

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub min: f64,
    pub avg: f64,
    pub max: f64,
    /// Population standard deviation.
    pub sd: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let avg = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - avg).powi(2)).sum::<f64>() / n;
        Some(Spread {
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            avg,
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            sd: var.sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRepetition {
    pub user_id: String,
    pub total: usize,
    pub unique_count: usize,
    pub repeated_count: usize,
    pub repeated_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub schema_version: u32,
    pub users: Vec<UserRepetition>,
    pub repeated_pct: Spread,
    pub repeated_count: Spread,
}

/// Per-user repeated-request statistics and their spread across users.
pub fn cmd_stats(config: &RunConfig) -> Result<StatsReport> {
    let loaded = load_input(config)?;
    let users: Vec<UserRepetition> = loaded
        .traces
        .values()
        .map(|t| {
            let s = repetition_stats(t);
            UserRepetition {
                user_id: t.user_id.clone(),
                total: s.total,
                unique_count: s.unique_count,
                repeated_count: s.repeated_count,
                repeated_pct: s.repeated_pct,
            }
        })
        .collect();
    let pct: Vec<f64> = users.iter().map(|u| u.repeated_pct).collect();
    let count: Vec<f64> = users.iter().map(|u| u.repeated_count as f64).collect();
    let report = StatsReport {
        schema_version: REPORT_SCHEMA_VERSION,
        repeated_pct: Spread::of(&pct).expect("at least one user"),
        repeated_count: Spread::of(&count).expect("at least one user"),
        users,
    };
    create_dir(&config.output_dir)?;
    write_json(&config.output_dir.join("stats.json"), &report)?;
    Ok(report)
}

// ---------------------------------------------------------------- evaluate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub user_id: String,
    pub algorithm: Algorithm,
    /// `full`, or the pruning strategy applied to the training requests.
    pub variant: String,
    pub training_requests: usize,
    pub test_requests: usize,
    pub size_reduction: Option<f64>,
    pub outcome: TestOutcome,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedUser {
    pub user_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub algorithm: Algorithm,
    pub variant: String,
    pub users: usize,
    pub means: BTreeMap<Metric, MeanValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruningDelta {
    pub algorithm: Algorithm,
    pub metric: Metric,
    pub full: Option<f64>,
    pub pruned: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruningSummary {
    pub spec: PruneSpec,
    pub mean_size_reduction: MeanValue,
    pub deltas: Vec<PruningDelta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainCutoffSummary {
    pub min_repeated_pct: f64,
    pub requests_removed: usize,
    pub domains_removed: usize,
    pub users_excluded: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: String,
    pub config: RunConfig,
    pub predictors: Vec<PredictorConfig>,
    pub input: LoadSummary,
    pub domain_cutoff: Option<DomainCutoffSummary>,
    pub skipped: Vec<SkippedUser>,
    pub rows: Vec<OutcomeRow>,
    pub aggregates: Vec<Aggregate>,
    pub pruning: Option<PruningSummary>,
    pub timing: Timing,
}

const FULL: &str = "full";

struct UserEval {
    rows: Vec<OutcomeRow>,
    times: Vec<(Algorithm, String, Duration)>,
    skipped: Option<SkippedUser>,
}

struct Prepared {
    traces: BTreeMap<String, UserTrace>,
    cutoff: Option<DomainCutoffSummary>,
    excluded: Vec<SkippedUser>,
}

fn apply_domain_cutoff(config: &RunConfig, traces: BTreeMap<String, UserTrace>) -> Prepared {
    let Some(min_pct) = config.domain_cutoff else {
        return Prepared {
            traces,
            cutoff: None,
            excluded: Vec::new(),
        };
    };
    let mut summary = DomainCutoffSummary {
        min_repeated_pct: min_pct,
        requests_removed: 0,
        domains_removed: 0,
        users_excluded: Vec::new(),
    };
    let mut kept = BTreeMap::new();
    let mut excluded = Vec::new();
    for (user, trace) in traces {
        let c = domain_cutoff_filter(&trace, min_pct);
        summary.requests_removed += trace.len() - c.trace.len();
        summary.domains_removed += c.removed_domains.len();
        if c.excluded {
            summary.users_excluded.push(user.clone());
            excluded.push(SkippedUser {
                user_id: user,
                reason: "every domain below the repetition cut-off".into(),
            });
        } else {
            kept.insert(user, c.trace);
        }
    }
    Prepared {
        traces: kept,
        cutoff: Some(summary),
        excluded,
    }
}

fn evaluate_user(config: &RunConfig, trace: &UserTrace) -> UserEval {
    let keys = trace.url_keys();
    let (training, test) = match split(&keys, config.split.training_ratio) {
        Ok(s) => s,
        Err(skip @ Skip::TooShort { .. }) => {
            return UserEval {
                rows: Vec::new(),
                times: Vec::new(),
                skipped: Some(SkippedUser {
                    user_id: trace.user_id.clone(),
                    reason: skip.to_string(),
                }),
            }
        }
    };

    let mut variants: Vec<(String, Vec<&str>, Option<f64>)> =
        vec![(FULL.to_string(), training.to_vec(), None)];
    if let Some(spec) = &config.prune {
        let (kept, reduction) = if training.is_empty() {
            (Vec::new(), 0.0)
        } else {
            let r = prune(training, spec).expect("validated spec, non-empty training");
            (r.kept, r.size_reduction)
        };
        variants.push((spec.strategy.name().to_string(), kept, Some(reduction)));
    }

    let selected = config.selected();
    let mut rows = Vec::new();
    let mut times = Vec::new();
    for (variant, model_training, reduction) in &variants {
        let run_of = |a: Algorithm| {
            let pc = config.predictor_config(a);
            run_split(
                &pc,
                model_training,
                training,
                test,
                config.split.trigger_depth_for(&pc),
            )
        };
        let naive = run_of(Algorithm::Naive);
        let identity = RunIdentity {
            user_id: trace.user_id.clone(),
            training_len: training.len(),
            test_len: test.len(),
        };
        let naive_metrics = MetricsReport::from_outcome(identity.clone(), &naive.outcome);
        for &a in &selected {
            let run = if a == Algorithm::Naive {
                naive.clone()
            } else {
                run_of(a)
            };
            let raw = MetricsReport::from_outcome(identity.clone(), &run.outcome);
            let metrics = normalize_against_naive(&raw, &naive_metrics).expect("same run identity");
            times.push((a, variant.clone(), run.elapsed));
            rows.push(OutcomeRow {
                user_id: trace.user_id.clone(),
                algorithm: a,
                variant: variant.clone(),
                training_requests: model_training.len(),
                test_requests: test.len(),
                size_reduction: *reduction,
                outcome: run.outcome,
                metrics,
            });
        }
    }
    UserEval {
        rows,
        times,
        skipped: None,
    }
}

fn aggregate_rows(rows: &[OutcomeRow]) -> Vec<Aggregate> {
    // unpruned runs first
    let mut groups: BTreeMap<(bool, String, Algorithm), Vec<&OutcomeRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.variant != FULL, r.variant.clone(), r.algorithm))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((_, variant, algorithm), rs)| Aggregate {
            algorithm,
            variant,
            users: rs.len(),
            means: Metric::ALL
                .iter()
                .map(|&m| (m, mean_of(rs.iter().map(|r| r.metrics.get(m)))))
                .collect(),
        })
        .collect()
}

fn pruning_summary(
    spec: &PruneSpec,
    rows: &[OutcomeRow],
    aggregates: &[Aggregate],
) -> PruningSummary {
    let pruned_variant = spec.strategy.name();
    let mut reductions = BTreeMap::new();
    for r in rows.iter().filter(|r| r.variant == pruned_variant) {
        reductions
            .entry(r.user_id.as_str())
            .or_insert(r.size_reduction);
    }
    let mean_of_variant = |variant: &str, a: Algorithm, m: Metric| {
        aggregates
            .iter()
            .find(|g| g.variant == variant && g.algorithm == a)
            .and_then(|g| g.means.get(&m))
            .and_then(|v| v.mean)
    };
    let algorithms: BTreeSet<Algorithm> = rows.iter().map(|r| r.algorithm).collect();
    let mut deltas = Vec::new();
    for a in algorithms {
        for m in Metric::PRIMARY {
            let full = mean_of_variant(FULL, a, m);
            let pruned = mean_of_variant(pruned_variant, a, m);
            deltas.push(PruningDelta {
                algorithm: a,
                metric: m,
                full,
                pruned,
                delta: full.zip(pruned).map(|(f, p)| p - f),
            });
        }
    }
    PruningSummary {
        spec: *spec,
        mean_size_reduction: mean_of(reductions.into_values()),
        deltas,
    }
}

fn write_metrics_csv(path: &Path, rows: &[&OutcomeRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["user_id", "algorithm", "metric", "value"])?;
    for r in rows {
        for m in Metric::ALL {
            w.write_record([
                r.user_id.as_str(),
                r.algorithm.name(),
                m.name(),
                &fmt_opt(r.metrics.get(m)),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Splits, trains and replays every user with every selected algorithm,
/// optionally after domain cut-off and training-data pruning. Writes
/// `report.json` and `metrics.csv` (plus `metrics_<strategy>.csv` when
/// pruning).
pub fn cmd_evaluate(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let started = Instant::now();
    let loaded = load_input(config)?;
    let prepared = apply_domain_cutoff(config, loaded.traces);

    let users: Vec<&UserTrace> = prepared.traces.values().collect();
    let evals: Vec<UserEval> = config
        .pool()?
        .install(|| users.par_iter().map(|t| evaluate_user(config, t)).collect());

    let mut skipped = prepared.excluded;
    let mut rows = Vec::new();
    let mut times: BTreeMap<String, Vec<Duration>> = BTreeMap::new();
    for e in evals {
        skipped.extend(e.skipped);
        rows.extend(e.rows);
        for (a, variant, d) in e.times {
            let key = if variant == FULL {
                a.name().to_string()
            } else {
                format!("{}/{variant}", a.name())
            };
            times.entry(key).or_default().push(d);
        }
    }
    skipped.sort_by(|a, b| a.user_id.cmp(&b.user_id));

    let aggregates = aggregate_rows(&rows);
    let pruning = config
        .prune
        .as_ref()
        .map(|spec| pruning_summary(spec, &rows, &aggregates));

    create_dir(&config.output_dir)?;
    let full_rows: Vec<&OutcomeRow> = rows.iter().filter(|r| r.variant == FULL).collect();
    write_metrics_csv(&config.output_dir.join("metrics.csv"), &full_rows)?;
    if let Some(spec) = &config.prune {
        let name = spec.strategy.name();
        let pruned: Vec<&OutcomeRow> = rows.iter().filter(|r| r.variant == name).collect();
        write_metrics_csv(
            &config
                .output_dir
                .join(format!("metrics_{}.csv", name.to_ascii_lowercase())),
            &pruned,
        )?;
    }

    let report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        command: "evaluate".into(),
        config: config.clone(),
        predictors: config
            .selected()
            .into_iter()
            .map(|a| config.predictor_config(a))
            .collect(),
        input: loaded.summary,
        domain_cutoff: prepared.cutoff,
        skipped,
        rows,
        aggregates,
        pruning,
        timing: Timing {
            workers: config.workers,
            wall_ms: millis(started.elapsed()),
            per_model: times
                .into_iter()
                .filter_map(|(k, v)| TimingStats::of(v).map(|s| (k, s)))
                .collect(),
        },
    };
    write_json(&config.output_dir.join("report.json"), &report)?;
    Ok(report)
}

// ---------------------------------------------------------------- sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSweep {
    pub predictor: PredictorConfig,
    pub models_evaluated: usize,
    pub skipped_users: BTreeMap<usize, usize>,
    pub means: Vec<crate::sweep::SizeMeans>,
    /// `None` when fewer than two window sizes produced a defined mean.
    pub cutoffs: BTreeMap<Metric, Option<CutoffScan>>,
    pub records_csv: String,
    pub means_csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub command: String,
    pub config: RunConfig,
    pub input: LoadSummary,
    pub domain_cutoff: Option<DomainCutoffSummary>,
    pub users: usize,
    pub algorithms: BTreeMap<Algorithm, AlgorithmSweep>,
    pub timing: Timing,
}

pub fn write_sweep_csvs(dir: &Path, result: &SweepResult) -> Result<(String, String)> {
    let tag = result.algorithm.name().to_ascii_lowercase();
    let records_name = format!("sweep_{tag}.csv");
    let means_name = format!("sweep_means_{tag}.csv");

    let path = dir.join(&records_name);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "window_size",
        "window_index",
        "user_id",
        "static_precision",
        "static_recall",
        "dynamic_recall",
        "elapsed_ms",
    ])?;
    for r in &result.records {
        w.write_record([
            r.window_size.to_string(),
            r.window_index.to_string(),
            r.user_id.clone(),
            fmt_opt(r.metrics.static_precision),
            fmt_opt(r.metrics.static_recall),
            fmt_opt(r.metrics.dynamic_recall),
            format!("{:.3}", millis(r.elapsed)),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join(&means_name);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["window_size", "metric", "mean", "count"])?;
    for s in &result.means {
        for (m, v) in &s.means {
            w.write_record([
                s.window_size.to_string(),
                m.name().to_string(),
                fmt_opt(v.mean),
                v.count.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok((records_name, means_name))
}

/// Runs the sliding-window sweep for every selected algorithm and writes
/// per-model and per-size CSVs plus `report.json`.
pub fn cmd_sweep(config: &RunConfig) -> Result<SweepReport> {
    config.validate()?;
    config.sliding_window.validate()?;
    let started = Instant::now();
    let loaded = load_input(config)?;
    let prepared = apply_domain_cutoff(config, loaded.traces);
    let pool = config.pool()?;
    create_dir(&config.output_dir)?;

    let mut algorithms = BTreeMap::new();
    let mut per_model = BTreeMap::new();
    for a in config.selected() {
        let pc = config.predictor_config(a);
        let result = pool.install(|| run_sweep(&prepared.traces, &pc, &config.sliding_window))?;
        let (records_csv, means_csv) = write_sweep_csvs(&config.output_dir, &result)?;
        let cutoffs = SWEEP_METRICS
            .iter()
            .map(|&m| {
                let series = result.mean_series(m);
                (m, cutoff_scan(&series, config.cutoff_epsilon).ok())
            })
            .collect();
        if let Some(t) = TimingStats::of(result.records.iter().map(|r| r.elapsed)) {
            per_model.insert(a.name().to_string(), t);
        }
        algorithms.insert(
            a,
            AlgorithmSweep {
                predictor: pc,
                models_evaluated: result.models_evaluated(),
                skipped_users: result.skipped_users,
                means: result.means,
                cutoffs,
                records_csv,
                means_csv,
            },
        );
    }

    let report = SweepReport {
        schema_version: REPORT_SCHEMA_VERSION,
        command: "sweep".into(),
        config: config.clone(),
        input: loaded.summary,
        domain_cutoff: prepared.cutoff,
        users: prepared.traces.len(),
        algorithms,
        timing: Timing {
            workers: config.workers,
            wall_ms: millis(started.elapsed()),
            per_model,
        },
    };
    write_json(&config.output_dir.join("report.json"), &report)?;
    Ok(report)
}

// ---------------------------------------------------------------- selftest

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub seed: u64,
    pub traces: usize,
    pub engine_comparisons: usize,
    pub fold_comparisons: usize,
    pub dominance_checks: usize,
    pub failures: Vec<String>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn random_config<R: Rng>(rng: &mut R, algorithm: Algorithm) -> PredictorConfig {
    PredictorConfig {
        algorithm,
        lookahead_window: rng.gen_range(1..=5),
        confidence_threshold: [0.0, 0.1, 0.25, 0.5, 1.0][rng.gen_range(0..5)],
        ppm_order: rng.gen_range(1..=3),
        top_n: rng.gen_range(1..=6),
    }
}

/// Cross-checks the test engine and predictors against the straight-line
/// reference on `traces` seeded random traces (length <= 100, alphabet
/// <= 15), with default and randomized predictor settings.
pub fn run_selftest(seed: u64, traces: usize) -> SelftestReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SelftestReport {
        seed,
        traces,
        ..Default::default()
    };
    for case in 0..traces {
        let keys = synth::random_keys(&mut rng, 100, 15);
        let ratio = [0.5, 0.8, 0.9][rng.gen_range(0..3)];
        let (training, test) = match split(&keys, ratio) {
            Ok(s) => s,
            Err(_) => (&keys[..], &keys[keys.len()..]),
        };
        let training_refs: Vec<&str> = training.iter().map(String::as_str).collect();
        let test_refs: Vec<&str> = test.iter().map(String::as_str).collect();

        let mut naive_outcome = None;
        let mut others = Vec::new();
        for a in Algorithm::ALL {
            for (label, pc) in [
                ("default", PredictorConfig::new(a)),
                ("random", random_config(&mut rng, a)),
            ] {
                let depth = pc.default_trigger_depth();
                let got = run_split(&pc, &training_refs, &training_refs, &test_refs, depth).outcome;
                let want = oracle::reference_test_engine(&pc, training, test, depth);
                report.engine_comparisons += 1;
                if got != want {
                    report.failures.push(format!(
                        "case {case}: {a} ({label}) engine outcome differs from reference"
                    ));
                }

                let trained = PredictionModel::train(&pc, &keys);
                let mut folded = PredictionModel::empty(&pc);
                for k in &keys {
                    folded.update(k);
                }
                report.fold_comparisons += 1;
                if trained.to_json() != folded.to_json() {
                    report.failures.push(format!(
                        "case {case}: {a} ({label}) train differs from update fold"
                    ));
                }

                if label == "default" {
                    if a == Algorithm::Naive {
                        naive_outcome = Some(got);
                    } else {
                        others.push((a, got));
                    }
                }
            }
        }

        let naive = naive_outcome.expect("naive evaluated");
        let expected_hits = oracle::previously_seen_count(training, test);
        report.dominance_checks += 1;
        if naive.hit_count != expected_hits {
            report.failures.push(format!(
                "case {case}: Naive hit {} of {expected_hits} seen requests",
                naive.hit_count
            ));
        }
        for (a, o) in others {
            let ge = |x: Option<f64>, y: Option<f64>| match (x, y) {
                (Some(x), Some(y)) => x >= y,
                (None, None) => true,
                _ => false,
            };
            report.dominance_checks += 1;
            if !ge(
                crate::metrics::static_recall(&naive),
                crate::metrics::static_recall(&o),
            ) || !ge(
                crate::metrics::dynamic_recall(&naive),
                crate::metrics::dynamic_recall(&o),
            ) {
                report
                    .failures
                    .push(format!("case {case}: {a} out-recalls Naive"));
            }
        }
    }
    report
}
