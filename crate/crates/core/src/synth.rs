//! Seeded synthetic request traces for self-tests and benchmarks.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::trace::UserTrace;

/// A short trace over a small alphabet spread across a few domains.
pub fn random_keys<R: Rng>(rng: &mut R, max_len: usize, max_alphabet: usize) -> Vec<String> {
    let len = rng.gen_range(0..=max_len);
    let alphabet = rng.gen_range(1..=max_alphabet);
    let domains = rng.gen_range(1..=3usize);
    let names: Vec<String> = (0..alphabet)
        .map(|k| format!("http://d{}.example/{k}", k % domains))
        .collect();
    (0..len)
        .map(|_| names.choose(rng).unwrap().clone())
        .collect()
}

/// Shape of a bursty synthetic user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BurstProfile {
    /// Distinct multi-request patterns (e.g. a page and its resources).
    pub patterns: usize,
    pub pattern_len: (usize, usize),
    /// How often a chosen pattern is repeated back to back.
    pub burst_repeats: (usize, usize),
    /// Zipf exponent of pattern popularity.
    pub popularity_skew: f64,
    /// Probability of a noise request between bursts.
    pub noise_rate: f64,
    /// Distinct noise URLs the user draws from.
    pub noise_pool: usize,
}

impl Default for BurstProfile {
    fn default() -> Self {
        BurstProfile {
            patterns: 12,
            pattern_len: (2, 5),
            burst_repeats: (1, 3),
            popularity_skew: 1.0,
            noise_rate: 0.3,
            noise_pool: 60,
        }
    }
}

/// A user whose requests are repeated bursts of a few popular patterns,
/// interleaved with noise.
pub fn bursty_user<R: Rng>(
    rng: &mut R,
    user_id: &str,
    len: usize,
    profile: &BurstProfile,
) -> UserTrace {
    let patterns: Vec<Vec<String>> = (0..profile.patterns)
        .map(|p| {
            let n = rng.gen_range(profile.pattern_len.0..=profile.pattern_len.1);
            let domain = format!(
                "site{}.example",
                rng.gen_range(0..profile.patterns.max(2) / 2 + 1)
            );
            (0..n)
                .map(|i| {
                    format!(
                        "https://{domain}/{user_id}/p{p}/r{i}?v={}",
                        rng.gen_range(0..3)
                    )
                })
                .collect()
        })
        .collect();
    let weights: Vec<f64> = (1..=profile.patterns)
        .map(|rank| 1.0 / (rank as f64).powf(profile.popularity_skew))
        .collect();
    let total: f64 = weights.iter().sum();

    let mut urls = Vec::with_capacity(len + 16);
    while urls.len() < len {
        if rng.gen_bool(profile.noise_rate) {
            let n = rng.gen_range(0..profile.noise_pool.max(1));
            urls.push(format!("https://noise{}.example/{user_id}/n{n}", n % 7));
            continue;
        }
        let mut pick = rng.gen_range(0.0..total);
        let mut chosen = 0;
        for (i, w) in weights.iter().enumerate() {
            if pick < *w {
                chosen = i;
                break;
            }
            pick -= w;
        }
        let repeats = rng.gen_range(profile.burst_repeats.0..=profile.burst_repeats.1);
        for _ in 0..repeats {
            urls.extend(patterns[chosen].iter().cloned());
        }
    }
    urls.truncate(len);
    UserTrace::from_urls(user_id, urls).expect("synthetic urls have hosts")
}
