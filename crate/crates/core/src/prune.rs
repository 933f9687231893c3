//! Training-data pruning (MOR, MAD, MSD) and the per-domain repetition
//! cut-off.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{parse_domain, repetition_stats_of, UserTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PruneStrategy {
    /// Most occurring requests: groups of identical requests, by size.
    #[serde(rename = "MOR")]
    Mor,
    /// Most accessed domains: domain groups, by size.
    #[serde(rename = "MAD")]
    Mad,
    /// Most suitable domains: domain groups, by share of repeated requests.
    #[serde(rename = "MSD")]
    Msd,
}

impl PruneStrategy {
    pub fn name(self) -> &'static str {
        match self {
            PruneStrategy::Mor => "MOR",
            PruneStrategy::Mad => "MAD",
            PruneStrategy::Msd => "MSD",
        }
    }
}

impl std::str::FromStr for PruneStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mor" => Ok(PruneStrategy::Mor),
            "mad" => Ok(PruneStrategy::Mad),
            "msd" => Ok(PruneStrategy::Msd),
            other => Err(Error::Config(format!("unknown pruning strategy {other:?}"))),
        }
    }
}

pub const DEFAULT_KEEP_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneSpec {
    pub strategy: PruneStrategy,
    pub keep_fraction: f64,
}

impl PruneSpec {
    pub fn new(strategy: PruneStrategy) -> Self {
        PruneSpec {
            strategy,
            keep_fraction: DEFAULT_KEEP_FRACTION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "keep fraction {} outside (0, 1]",
                self.keep_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneResult<'a> {
    /// Surviving requests in their original order.
    pub kept: Vec<&'a str>,
    pub size_reduction: f64,
    pub groups_total: usize,
    pub groups_kept: usize,
}

/// `ceil(fraction * groups)`, computed so that exact products are not
/// pushed up by floating-point error.
pub fn groups_to_keep(groups: usize, fraction: f64) -> usize {
    ((fraction * groups as f64) - 1e-9).ceil().max(0.0) as usize
}

fn domain_of(key: &str) -> String {
    parse_domain(key).unwrap_or_else(|_| key.to_string())
}

pub fn prune<'a>(training: &[&'a str], spec: &PruneSpec) -> Result<PruneResult<'a>> {
    if training.is_empty() {
        return Err(Error::Contract(
            "cannot prune an empty training sequence".into(),
        ));
    }
    spec.validate()?;

    // group key of every request
    let group_of: Vec<String> = match spec.strategy {
        PruneStrategy::Mor => training.iter().map(|k| k.to_string()).collect(),
        PruneStrategy::Mad | PruneStrategy::Msd => training.iter().map(|k| domain_of(k)).collect(),
    };
    let mut members: BTreeMap<&str, Vec<&'a str>> = BTreeMap::new();
    for (g, &k) in group_of.iter().zip(training) {
        members.entry(g.as_str()).or_default().push(k);
    }

    let mut ranked: Vec<(&str, f64)> = members
        .iter()
        .map(|(&g, reqs)| {
            let score = match spec.strategy {
                PruneStrategy::Mor | PruneStrategy::Mad => reqs.len() as f64,
                PruneStrategy::Msd => repetition_stats_of(reqs.iter().copied()).repeated_pct,
            };
            (g, score)
        })
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let groups_total = ranked.len();
    let groups_kept = groups_to_keep(groups_total, spec.keep_fraction).min(groups_total);
    let keep: HashSet<&str> = ranked[..groups_kept].iter().map(|(g, _)| *g).collect();
    let kept: Vec<&'a str> = training
        .iter()
        .zip(&group_of)
        .filter(|(_, g)| keep.contains(g.as_str()))
        .map(|(&k, _)| k)
        .collect();

    Ok(PruneResult {
        size_reduction: 1.0 - kept.len() as f64 / training.len() as f64,
        kept,
        groups_total,
        groups_kept,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainCutoff {
    pub trace: UserTrace,
    pub removed_domains: BTreeSet<String>,
    /// Every request was removed.
    pub excluded: bool,
}

pub const DEFAULT_DOMAIN_CUTOFF: f64 = 0.10;

/// Removes the requests of every domain whose share of repeated requests
/// (within this user's trace) is below `min_repeated_pct`.
pub fn domain_cutoff_filter(trace: &UserTrace, min_repeated_pct: f64) -> DomainCutoff {
    let mut per_domain: HashMap<&str, Vec<&str>> = HashMap::new();
    for r in trace.requests() {
        per_domain
            .entry(r.domain.as_str())
            .or_default()
            .push(r.url_key.as_str());
    }
    let removed_domains: BTreeSet<String> = per_domain
        .iter()
        .filter(|(_, keys)| {
            repetition_stats_of(keys.iter().copied()).repeated_pct < min_repeated_pct
        })
        .map(|(d, _)| d.to_string())
        .collect();
    let filtered = trace.retain(|r| !removed_domains.contains(&r.domain));
    DomainCutoff {
        excluded: filtered.is_empty() && !trace.is_empty(),
        trace: filtered,
        removed_domains,
    }
}
