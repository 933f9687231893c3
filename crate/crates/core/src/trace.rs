//! Request records, per-user traces and repetition statistics.
//!
//! A request is identified by its full URL string, query string included.
//! Two requests are the same request iff their URL strings are byte-equal;
//! no canonicalization of any kind is applied.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One HTTP GET request issued by a user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Request {
    pub user_id: String,
    pub timestamp: i64,
    pub url_key: String,
    pub domain: String,
}

impl Request {
    pub fn new(
        user_id: impl Into<String>,
        timestamp: i64,
        url_key: impl Into<String>,
    ) -> Result<Self> {
        let url_key = url_key.into();
        let domain = parse_domain(&url_key)?;
        Ok(Request {
            user_id: user_id.into(),
            timestamp,
            url_key,
            domain,
        })
    }
}

/// Extracts the lowercased host of a URL.
///
/// Without a `scheme://` prefix the leading token up to the first `/` is
/// taken as the authority. Userinfo (`user@`) and a trailing `:port` are not
/// part of the host.
pub fn parse_domain(url_key: &str) -> Result<String> {
    if url_key.is_empty() {
        return Err(Error::MalformedUrl {
            url: String::new(),
            reason: "empty url",
        });
    }
    let rest = match url_key.find("://") {
        Some(i) => &url_key[i + 3..],
        None => url_key,
    };
    let authority = match rest.find(['/', '?', '#']) {
        Some(i) => &rest[..i],
        None => rest,
    };
    let host_port = match authority.rfind('@') {
        Some(i) => &authority[i + 1..],
        None => authority,
    };
    let host = if host_port.starts_with('[') {
        // IPv6 literal, keep the brackets
        match host_port.find(']') {
            Some(i) => &host_port[..=i],
            None => host_port,
        }
    } else {
        match host_port.rfind(':') {
            Some(i) if host_port[i + 1..].bytes().all(|b| b.is_ascii_digit()) => &host_port[..i],
            _ => host_port,
        }
    };
    if host.is_empty() {
        return Err(Error::MalformedUrl {
            url: url_key.to_string(),
            reason: "no host component",
        });
    }
    Ok(host.to_ascii_lowercase())
}

/// Time-ordered requests of a single user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserTrace {
    pub user_id: String,
    requests: Vec<Request>,
}

impl UserTrace {
    /// Builds a trace, sorting stably by timestamp.
    pub fn new(user_id: impl Into<String>, mut requests: Vec<Request>) -> Result<Self> {
        let user_id = user_id.into();
        if let Some(r) = requests.iter().find(|r| r.user_id != user_id) {
            return Err(Error::Contract(format!(
                "request of user {:?} in trace of user {:?}",
                r.user_id, user_id
            )));
        }
        requests.sort_by_key(|r| r.timestamp);
        Ok(UserTrace { user_id, requests })
    }

    /// Builds a trace from bare URLs, using their positions as timestamps.
    pub fn from_urls<I, S>(user_id: impl Into<String>, urls: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let user_id = user_id.into();
        let requests = urls
            .into_iter()
            .enumerate()
            .map(|(i, u)| Request::new(user_id.clone(), i as i64, u))
            .collect::<Result<Vec<_>>>()?;
        Ok(UserTrace { user_id, requests })
    }

    pub fn requests(&self) -> &[Request] {
        &self.requests
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    pub fn url_keys(&self) -> Vec<&str> {
        self.requests.iter().map(|r| r.url_key.as_str()).collect()
    }

    /// Keeps only the requests matching `keep`, preserving order.
    pub fn retain(&self, mut keep: impl FnMut(&Request) -> bool) -> UserTrace {
        UserTrace {
            user_id: self.user_id.clone(),
            requests: self.requests.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionStats {
    pub total: usize,
    pub unique_count: usize,
    /// Requests whose URL occurs at least twice in the trace.
    pub repeated_count: usize,
    pub repeated_pct: f64,
    /// Occurrence counts of the repeated URLs only.
    pub occurrence_histogram: BTreeMap<String, usize>,
}

pub fn repetition_stats(trace: &UserTrace) -> RepetitionStats {
    repetition_stats_of(trace.requests().iter().map(|r| r.url_key.as_str()))
}

pub(crate) fn repetition_stats_of<'a>(keys: impl IntoIterator<Item = &'a str>) -> RepetitionStats {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut total = 0;
    for k in keys {
        *counts.entry(k).or_default() += 1;
        total += 1;
    }
    let occurrence_histogram: BTreeMap<String, usize> = counts
        .iter()
        .filter(|(_, &c)| c >= 2)
        .map(|(k, &c)| (k.to_string(), c))
        .collect();
    let repeated_count = occurrence_histogram.values().sum();
    RepetitionStats {
        total,
        unique_count: counts.len(),
        repeated_count,
        repeated_pct: if total == 0 {
            0.0
        } else {
            repeated_count as f64 / total as f64
        },
        occurrence_histogram,
    }
}
