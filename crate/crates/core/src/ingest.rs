//! Raw log loading, GET filtering and outlier-user removal.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{Request, UserTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogFormat {
    Csv,
    Jsonl,
}

impl std::str::FromStr for LogFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(LogFormat::Csv),
            "jsonl" | "json" => Ok(LogFormat::Jsonl),
            other => Err(Error::Config(format!("unknown log format {other:?}"))),
        }
    }
}

/// One row of a request log, before filtering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawLogRecord {
    pub user_id: String,
    #[serde(rename = "timestamp_ms")]
    pub timestamp: i64,
    pub method: String,
    pub url: String,
}

impl RawLogRecord {
    fn normalized(mut self) -> Self {
        self.method = self.method.trim().to_ascii_uppercase();
        self
    }
}

/// Keeps GET requests only, order preserved. Methods compare case-insensitively.
pub fn filter_get(records: Vec<RawLogRecord>) -> Vec<RawLogRecord> {
    records
        .into_iter()
        .map(RawLogRecord::normalized)
        .filter(|r| r.method == "GET")
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Abort on the first malformed row instead of skipping it.
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowIssue {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadSummary {
    pub rows_read: u64,
    pub get_retained: u64,
    pub non_get_dropped: u64,
    pub malformed_skipped: u64,
    /// First few malformed rows, for diagnostics.
    pub issues: Vec<RowIssue>,
    pub users: usize,
}

const MAX_REPORTED_ISSUES: usize = 50;

#[derive(Debug, Clone)]
pub struct LoadedTraces {
    pub traces: BTreeMap<String, UserTrace>,
    pub summary: LoadSummary,
}

/// Reads a request log and partitions it into per-user traces.
pub fn load_traces(path: &Path, format: LogFormat, opts: LoadOptions) -> Result<LoadedTraces> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_traces(BufReader::new(file), format, opts)
}

pub fn read_traces<R: Read>(
    reader: R,
    format: LogFormat,
    opts: LoadOptions,
) -> Result<LoadedTraces> {
    let mut builder = TraceBuilder::new(opts);
    match format {
        LogFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new()
                .has_headers(true)
                .from_reader(reader);
            let headers = rdr.headers()?.clone();
            for row in rdr.records() {
                let line = row
                    .as_ref()
                    .ok()
                    .and_then(|r| r.position())
                    .map(|p| p.line())
                    .unwrap_or(0);
                let parsed = row.map_err(|e| e.to_string()).and_then(|r| {
                    r.deserialize::<RawLogRecord>(Some(&headers))
                        .map_err(|e| e.to_string())
                });
                let line = match (&parsed, line) {
                    (Err(_), 0) => builder.summary.rows_read + 2,
                    (_, l) => l,
                };
                builder.push(line, parsed)?;
            }
        }
        LogFormat::Jsonl => {
            for (i, line) in BufReader::new(reader).lines().enumerate() {
                let line_no = i as u64 + 1;
                let text = line.map_err(|e| Error::Row {
                    line: line_no,
                    message: e.to_string(),
                })?;
                if text.trim().is_empty() {
                    continue;
                }
                let parsed = serde_json::from_str::<RawLogRecord>(&text).map_err(|e| e.to_string());
                builder.push(line_no, parsed)?;
            }
        }
    }
    Ok(builder.finish())
}

struct TraceBuilder {
    opts: LoadOptions,
    summary: LoadSummary,
    per_user: HashMap<String, Vec<Request>>,
}

impl TraceBuilder {
    fn new(opts: LoadOptions) -> Self {
        TraceBuilder {
            opts,
            summary: LoadSummary::default(),
            per_user: HashMap::new(),
        }
    }

    fn push(&mut self, line: u64, parsed: std::result::Result<RawLogRecord, String>) -> Result<()> {
        self.summary.rows_read += 1;
        let request = parsed.and_then(|rec| {
            let rec = rec.normalized();
            if rec.method.is_empty() {
                return Err("empty method".to_string());
            }
            if rec.user_id.is_empty() {
                return Err("empty user_id".to_string());
            }
            if rec.method != "GET" {
                return Ok(None);
            }
            Request::new(rec.user_id, rec.timestamp, rec.url)
                .map(Some)
                .map_err(|e| e.to_string())
        });
        match request {
            Ok(Some(req)) => {
                self.summary.get_retained += 1;
                self.per_user
                    .entry(req.user_id.clone())
                    .or_default()
                    .push(req);
            }
            Ok(None) => self.summary.non_get_dropped += 1,
            Err(message) => {
                if self.opts.strict {
                    return Err(Error::Row { line, message });
                }
                self.summary.malformed_skipped += 1;
                if self.summary.issues.len() < MAX_REPORTED_ISSUES {
                    self.summary.issues.push(RowIssue { line, message });
                }
            }
        }
        Ok(())
    }

    fn finish(self) -> LoadedTraces {
        let mut summary = self.summary;
        let traces: BTreeMap<String, UserTrace> = self
            .per_user
            .into_iter()
            .map(|(user, reqs)| {
                let trace =
                    UserTrace::new(user.clone(), reqs).expect("requests partitioned by user");
                (user, trace)
            })
            .collect();
        summary.users = traces.len();
        LoadedTraces { traces, summary }
    }
}

/// Tukey box-and-whisker statistics over per-user request counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierReport {
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub lower_fence: f64,
    pub upper_fence: f64,
    pub min_request_floor: usize,
    pub users_before: usize,
    /// Users above the upper fence.
    pub removed_above_fence: Vec<String>,
    /// Users below the request floor.
    pub removed_below_floor: Vec<String>,
}

impl OutlierReport {
    pub fn removed_users(&self) -> Vec<&str> {
        let mut all: Vec<&str> = self
            .removed_above_fence
            .iter()
            .chain(&self.removed_below_floor)
            .map(String::as_str)
            .collect();
        all.sort_unstable();
        all
    }
}

pub const DEFAULT_MIN_REQUESTS: usize = 10;

/// Linear-interpolation quantile over sorted data (the R-7 rule).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Drops users whose request count lies above the Tukey upper fence, and
/// users with fewer than `min_requests` requests.
pub fn remove_outlier_users(
    traces: BTreeMap<String, UserTrace>,
    min_requests: usize,
) -> Result<(BTreeMap<String, UserTrace>, OutlierReport)> {
    if traces.is_empty() {
        return Err(Error::Contract(
            "outlier removal needs at least one trace".into(),
        ));
    }
    let mut counts: Vec<f64> = traces.values().map(|t| t.len() as f64).collect();
    counts.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&counts, 0.25);
    let q3 = quantile_sorted(&counts, 0.75);
    let iqr = q3 - q1;
    let lower_fence = q1 - 1.5 * iqr;
    let upper_fence = q3 + 1.5 * iqr;

    let users_before = traces.len();
    let mut removed_above_fence = Vec::new();
    let mut removed_below_floor = Vec::new();
    let kept = traces
        .into_iter()
        .filter(|(user, trace)| {
            if trace.len() as f64 > upper_fence {
                removed_above_fence.push(user.clone());
                false
            } else if trace.len() < min_requests {
                removed_below_floor.push(user.clone());
                false
            } else {
                true
            }
        })
        .collect();
    Ok((
        kept,
        OutlierReport {
            q1,
            q3,
            iqr,
            lower_fence,
            upper_fence,
            min_request_floor: min_requests,
            users_before,
            removed_above_fence,
            removed_below_floor,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(method: &str) -> RawLogRecord {
        RawLogRecord {
            user_id: "u".into(),
            timestamp: 0,
            method: method.into(),
            url: "http://x/".into(),
        }
    }

    #[test]
    fn get_filter() {
        let out = filter_get(vec![rec("GET"), rec("POST"), rec("GET"), rec("HEAD")]);
        assert_eq!(out.len(), 2);
        assert!(filter_get(vec![]).is_empty());
        assert_eq!(filter_get(vec![rec("get")])[0].method, "GET");
    }

    fn load_csv(text: &str) -> LoadedTraces {
        read_traces(text.as_bytes(), LogFormat::Csv, LoadOptions::default()).unwrap()
    }

    #[test]
    fn csv_drops_non_get() {
        let loaded = load_csv(
            "user_id,timestamp_ms,method,url\n\
             u,1,GET,http://a/1\n\
             u,2,POST,http://a/2\n\
             u,3,GET,http://a/3\n",
        );
        assert_eq!(loaded.traces["u"].len(), 2);
        assert_eq!(loaded.summary.non_get_dropped, 1);
    }

    #[test]
    fn csv_sorts_and_partitions() {
        let loaded = load_csv(
            "user_id,timestamp_ms,method,url\n\
             u,30,GET,http://a/3\n\
             v,5,GET,http://b/2\n\
             u,10,GET,http://a/1\n\
             v,1,GET,\"http://b/1?x=1,2\"\n",
        );
        assert_eq!(loaded.traces.len(), 2);
        assert_eq!(loaded.traces["u"].url_keys(), ["http://a/1", "http://a/3"]);
        assert_eq!(
            loaded.traces["v"].url_keys(),
            ["http://b/1?x=1,2", "http://b/2"]
        );
    }

    #[test]
    fn lenient_skips_and_strict_aborts() {
        let text = "user_id,timestamp_ms,method,url\n\
                    u,1,GET,http://a/1\n\
                    u,notanumber,GET,http://a/2\n\
                    u,3,GET,\n";
        let loaded = load_csv(text);
        assert_eq!(loaded.summary.malformed_skipped, 2);
        assert_eq!(loaded.summary.issues[0].line, 3);
        assert_eq!(loaded.summary.issues[1].line, 4);
        let err = read_traces(
            text.as_bytes(),
            LogFormat::Csv,
            LoadOptions { strict: true },
        )
        .unwrap_err();
        assert!(matches!(err, Error::Row { line: 3, .. }), "{err}");
    }

    #[test]
    fn jsonl_lines() {
        let text = r#"{"user_id":"u","timestamp_ms":2,"method":"get","url":"http://a/2"}
{"user_id":"u","timestamp_ms":1,"method":"GET","url":"http://a/1"}

{"user_id":"u","timestamp_ms":3,"method":"PUT","url":"http://a/3"}
{"broken":
"#;
        let loaded =
            read_traces(text.as_bytes(), LogFormat::Jsonl, LoadOptions::default()).unwrap();
        assert_eq!(loaded.traces["u"].url_keys(), ["http://a/1", "http://a/2"]);
        assert_eq!(loaded.summary.non_get_dropped, 1);
        assert_eq!(loaded.summary.issues[0].line, 5);
    }

    #[test]
    fn duplicate_rows_are_kept() {
        let loaded =
            load_csv("user_id,timestamp_ms,method,url\nu,1,GET,http://a/1\nu,1,GET,http://a/1\n");
        assert_eq!(loaded.traces["u"].len(), 2);
    }

    fn traces_with_counts(counts: &[usize]) -> BTreeMap<String, UserTrace> {
        counts
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let user = format!("user{i:02}");
                let t =
                    UserTrace::from_urls(user.clone(), (0..n).map(|j| format!("h/{j}"))).unwrap();
                (user, t)
            })
            .collect()
    }

    #[test]
    fn tukey_removes_heavy_user() {
        let (kept, report) =
            remove_outlier_users(traces_with_counts(&[10, 12, 11, 13, 500]), 10).unwrap();
        assert_eq!((report.q1, report.q3, report.iqr), (11.0, 13.0, 2.0));
        assert_eq!(report.upper_fence, 16.0);
        assert_eq!(report.lower_fence, 8.0);
        assert_eq!(report.removed_above_fence, ["user04"]);
        assert_eq!(kept.len(), 4);
    }

    #[test]
    fn tukey_degenerate_distribution() {
        let (kept, report) =
            remove_outlier_users(traces_with_counts(&[20, 20, 20, 20]), 10).unwrap();
        assert_eq!(report.iqr, 0.0);
        assert_eq!((report.lower_fence, report.upper_fence), (20.0, 20.0));
        assert_eq!(kept.len(), 4);
    }

    #[test]
    fn floor_removes_small_user() {
        let (kept, report) =
            remove_outlier_users(traces_with_counts(&[3, 15, 16, 17]), 10).unwrap();
        assert_eq!(report.removed_below_floor, ["user00"]);
        assert!(!kept.contains_key("user00"));
    }

    // Fence values frozen from numpy.percentile (linear interpolation) on the
    // same counts: [3, 15, 16, 17, 18, 19, 21, 25, 40, 90].
    #[test]
    fn tukey_matches_numpy_percentiles() {
        let (_, report) = remove_outlier_users(
            traces_with_counts(&[3, 15, 16, 17, 18, 19, 21, 25, 40, 90]),
            10,
        )
        .unwrap();
        assert_eq!(report.q1, 16.25);
        assert_eq!(report.q3, 24.0);
        assert_eq!(report.upper_fence, 35.625);
        assert_eq!(report.lower_fence, 4.625);
        assert_eq!(report.removed_above_fence, ["user08", "user09"]);
        assert_eq!(report.removed_below_floor, ["user00"]);
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(remove_outlier_users(BTreeMap::new(), 10).is_err());
    }
}
