//! Acceptance gate. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use prefetch_eval::commands::{cmd_evaluate, cmd_sweep, write_trace_csv, RunConfig};
use prefetch_eval::engine::{run_split, run_user, split, SplitSpec, TestOutcome};
use prefetch_eval::metrics::{
    dynamic_recall, normalize_against_naive, static_recall, MetricsReport, RunIdentity,
};
use prefetch_eval::oracle::{previously_seen_count, reference_test_engine};
use prefetch_eval::predict::{Algorithm, PredictionModel, PredictorConfig};
use prefetch_eval::prune::{groups_to_keep, prune, PruneSpec, PruneStrategy};
use prefetch_eval::sweep::{
    cutoff_scan, enumerate_windows, run_sweep, SlidingWindowSpec, Trend, DEFAULT_WINDOW_SIZES,
};
use prefetch_eval::synth::{bursty_user, random_keys, BurstProfile};
use prefetch_eval::trace::{parse_domain, UserTrace};
use prefetch_eval::Metric;

const ORACLE_TRACES: usize = 1000;
const FOLD_SEQUENCES: usize = 500;
const PRUNE_TRACES: usize = 200;
const SWEEP_USERS: usize = 500;
const SWEEP_EPSILON: f64 = 0.005;
const THROUGHPUT_USERS: usize = 200;
const THROUGHPUT_LIMIT_MS: f64 = 100.0;
/// PPM must be at least this much slower than the next slowest model.
const PPM_MARGIN: f64 = 1.10;
/// Small stationary per-user vocabulary: repeated bursts of three short
/// patterns interleaved with three noise URLs.
const SWEEP_PROFILE: BurstProfile = BurstProfile {
    patterns: 3,
    pattern_len: (2, 3),
    burst_repeats: (1, 3),
    popularity_skew: 0.0,
    noise_rate: 0.6,
    noise_pool: 3,
};

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, budget_s: u64) -> Result<(), String> {
    ensure(elapsed <= Duration::from_secs(budget_s), || {
        format!("took {:.1}s, budget {budget_s}s", elapsed.as_secs_f64())
    })
}

fn refs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
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

fn oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut compared = 0;
    for case in 0..ORACLE_TRACES {
        let keys = random_keys(&mut rng, 100, 15);
        let ratio = [0.5, 0.8][case % 2];
        let cut = prefetch_eval::engine::training_len(keys.len(), ratio).min(keys.len());
        let (training, test) = keys.split_at(cut);
        for a in Algorithm::ALL {
            for pc in [PredictorConfig::new(a), random_config(&mut rng, a)] {
                let depth = pc.default_trigger_depth();
                let got =
                    run_split(&pc, &refs(training), &refs(training), &refs(test), depth).outcome;
                let want = reference_test_engine(&pc, training, test, depth);
                ensure(got == want, || {
                    format!("trace {case}, {a}: {got:?} != {want:?}")
                })?;
                compared += 1;
            }
        }
    }
    within(started.elapsed(), 30)?;
    Ok(format!(
        "{compared} runs over {ORACLE_TRACES} traces x 4 algorithms match exactly"
    ))
}

fn train_equals_fold() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..FOLD_SEQUENCES {
        let keys = random_keys(&mut rng, 100, 15);
        for a in Algorithm::ALL {
            for pc in [PredictorConfig::new(a), random_config(&mut rng, a)] {
                let trained = PredictionModel::train(&pc, &keys);
                let mut folded = PredictionModel::empty(&pc);
                for k in &keys {
                    folded.update(k);
                }
                ensure(trained.to_json() == folded.to_json(), || {
                    format!("sequence {case}, {a}: serializations differ")
                })?;
            }
        }
    }
    within(started.elapsed(), 10)?;
    Ok(format!(
        "{FOLD_SEQUENCES} sequences x 4 algorithms byte-identical"
    ))
}

fn naive_dominance() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut splits = 0;
    let ge = |x: Option<f64>, y: Option<f64>| match (x, y) {
        (Some(x), Some(y)) => x >= y,
        (None, None) => true,
        _ => false,
    };
    for case in 0..ORACLE_TRACES {
        let keys = random_keys(&mut rng, 100, 15);
        for ratio in [0.5, 0.8, 0.9] {
            let Ok((training, test)) = split(&keys, ratio) else {
                continue;
            };
            let run = |pc: &PredictorConfig| {
                run_split(
                    pc,
                    &refs(training),
                    &refs(training),
                    &refs(test),
                    pc.default_trigger_depth(),
                )
                .outcome
            };
            let naive = run(&PredictorConfig::new(Algorithm::Naive));
            let seen = previously_seen_count(training, test);
            ensure(naive.hit_count == seen, || {
                format!(
                    "trace {case}: Naive hit {} of {seen} previously seen",
                    naive.hit_count
                )
            })?;
            for a in [Algorithm::Dg, Algorithm::Ppm, Algorithm::Mp] {
                for pc in [PredictorConfig::new(a), random_config(&mut rng, a)] {
                    let o = run(&pc);
                    ensure(ge(static_recall(&naive), static_recall(&o)), || {
                        format!("trace {case}: {a} static recall above Naive")
                    })?;
                    ensure(ge(dynamic_recall(&naive), dynamic_recall(&o)), || {
                        format!("trace {case}: {a} dynamic recall above Naive")
                    })?;
                }
            }
            splits += 1;
        }
    }
    within(started.elapsed(), 10)?;
    Ok(format!(
        "{splits} splits, Naive recall never exceeded, hit counts exact"
    ))
}

fn normalization_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pc = PredictorConfig::new(Algorithm::Naive);
    let mut checked = 0;
    for case in 0..ORACLE_TRACES {
        let keys = random_keys(&mut rng, 100, 15);
        let Ok((training, test)) = split(&keys, 0.8) else {
            continue;
        };
        let o = run_split(&pc, &refs(training), &refs(training), &refs(test), 1).outcome;
        let id = RunIdentity {
            user_id: format!("u{case}"),
            training_len: training.len(),
            test_len: test.len(),
        };
        let raw = MetricsReport::from_outcome(id, &o);
        let n = normalize_against_naive(&raw, &raw).map_err(|e| e.to_string())?;
        if raw.static_recall.is_some_and(|r| r > 0.0) {
            ensure(n.normalized_static_recall == Some(1.0), || {
                format!("trace {case}: static")
            })?;
            checked += 1;
        }
        if raw.dynamic_recall.is_some_and(|r| r > 0.0) {
            ensure(n.normalized_dynamic_recall == Some(1.0), || {
                format!("trace {case}: dynamic")
            })?;
            checked += 1;
        }
    }
    Ok(format!("{checked} normalized recalls equal 1.0"))
}

fn outcome(
    hits: &[&str],
    misses: &[&str],
    cache: usize,
    prefetch: u64,
    hit: u64,
    miss: u64,
) -> TestOutcome {
    TestOutcome {
        cache_size: cache,
        hit_set: hits.iter().map(|s| s.to_string()).collect(),
        miss_set: misses.iter().map(|s| s.to_string()).collect(),
        prefetch_count: prefetch,
        hit_count: hit,
        miss_count: miss,
    }
}

fn hand_traced_fixtures() -> Outcome {
    let naive = PredictorConfig::new(Algorithm::Naive);
    let id = |t: usize| RunIdentity {
        user_id: "u".into(),
        training_len: 1,
        test_len: t,
    };

    let o = run_split(&naive, &["A", "B"], &["A", "B"], &["A", "B", "A"], 1).outcome;
    ensure(o == outcome(&["A", "B"], &[], 2, 2, 3, 0), || {
        format!("[A,B]/[A,B,A]: {o:?}")
    })?;
    let m = MetricsReport::from_outcome(id(3), &o);
    ensure(
        (m.static_precision, m.static_recall, m.dynamic_recall)
            == (Some(1.0), Some(1.0), Some(1.0)),
        || format!("[A,B]/[A,B,A] metrics: {m:?}"),
    )?;

    let o = run_split(&naive, &["A"], &["A"], &["C"], 1).outcome;
    ensure(o == outcome(&[], &["C"], 1, 1, 0, 1), || {
        format!("[A]/[C]: {o:?}")
    })?;
    let m = MetricsReport::from_outcome(id(1), &o);
    ensure(
        (m.static_precision, m.static_recall, m.dynamic_recall)
            == (Some(0.0), Some(0.0), Some(0.0)),
        || format!("[A]/[C] metrics: {m:?}"),
    )?;

    let cycle = UserTrace::from_urls(
        "u",
        (0..30).map(|i| ["http://x/A", "http://x/B", "http://x/C"][i % 3]),
    )
    .map_err(|e| e.to_string())?;
    let run = run_user(
        &cycle,
        &PredictorConfig::new(Algorithm::Dg),
        &SplitSpec::default(),
    )
    .map_err(|e| e.to_string())?;
    let dr = dynamic_recall(&run.outcome);
    ensure(dr == Some(1.0), || {
        format!("DG cycle dynamic recall {dr:?}")
    })?;
    ensure(
        run.outcome.hit_count == 6 && run.outcome.miss_count == 0,
        || format!("DG cycle: {:?}", run.outcome),
    )?;
    Ok("Naive [A,B]/[A,B,A], Naive [A]/[C], DG cycle reproduce pinned values".into())
}

fn pruning_contracts() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..PRUNE_TRACES {
        let mut keys = random_keys(&mut rng, 100, 15);
        if keys.is_empty() {
            keys.push("http://d0.example/0".into());
        }
        let training = refs(&keys);
        for strategy in [PruneStrategy::Mor, PruneStrategy::Mad, PruneStrategy::Msd] {
            let groups: BTreeSet<String> = match strategy {
                PruneStrategy::Mor => keys.iter().cloned().collect(),
                _ => keys.iter().map(|k| parse_domain(k).unwrap()).collect(),
            };
            let r = prune(&training, &PruneSpec::new(strategy)).map_err(|e| e.to_string())?;
            let mut it = training.iter();
            ensure(r.kept.iter().all(|k| it.any(|t| t == k)), || {
                format!("trace {case}, {strategy:?}: not an order-preserving subsequence")
            })?;
            let expected = (0.2 * groups.len() as f64).ceil() as usize;
            ensure(
                r.groups_total == groups.len() && r.groups_kept == expected,
                || {
                    format!(
                        "trace {case}, {strategy:?}: kept {}/{} groups, expected {expected}/{}",
                        r.groups_kept,
                        r.groups_total,
                        groups.len()
                    )
                },
            )?;
            ensure(groups_to_keep(groups.len(), 0.2) == expected, || {
                "groups_to_keep".into()
            })?;
            let all = prune(
                &training,
                &PruneSpec {
                    strategy,
                    keep_fraction: 1.0,
                },
            )
            .map_err(|e| e.to_string())?;
            ensure(all.kept == training && all.size_reduction == 0.0, || {
                format!("trace {case}, {strategy:?}: keep 1.0 is not the identity")
            })?;
        }
    }

    let fixture = [
        "http://x.example/1",
        "http://y.example/a",
        "http://x.example/2",
        "http://y.example/a",
        "http://x.example/3",
        "http://y.example/b",
        "http://y.example/b",
    ];
    let r = prune(
        &fixture,
        &PruneSpec {
            strategy: PruneStrategy::Msd,
            keep_fraction: 0.5,
        },
    )
    .map_err(|e| e.to_string())?;
    ensure(
        r.kept.iter().all(|k| k.starts_with("http://y.example/")) && r.kept.len() == 4,
        || format!("MSD fixture kept {:?}", r.kept),
    )?;
    Ok(format!(
        "{PRUNE_TRACES} traces x 3 strategies, MSD fixture keeps the repeated domain"
    ))
}

fn window_counts() -> Outcome {
    let mut cells = 0;
    for n in 0..=60 {
        for x in 2..=20 {
            for y in 1..=10 {
                let w = enumerate_windows(n, x, y);
                let expected = if n >= x { (n - x) / y + 1 } else { 0 };
                ensure(w.len() == expected, || {
                    format!("n={n} x={x} y={y}: {} windows", w.len())
                })?;
                ensure(
                    w.iter()
                        .enumerate()
                        .all(|(i, r)| r.start == i * y && r.len() == x),
                    || format!("n={n} x={x} y={y}: bad window bounds"),
                )?;
                cells += 1;
            }
        }
    }
    let w = enumerate_windows(10, 5, 1);
    ensure(w.len() == 6, || format!("n=10 x=5 y=1 gave {}", w.len()))?;
    Ok(format!("{cells} (n, x, y) cells, n=10 x=5 y=1 gives 6"))
}

fn fixture_log(dir: &Path) -> std::path::PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let profile = BurstProfile::default();
    let traces = dir.join("traces");
    fs::create_dir_all(&traces).unwrap();
    for u in 0..12 {
        let len = rng.gen_range(60..260);
        let t = bursty_user(&mut rng, &format!("user{u:02}"), len, &profile);
        write_trace_csv(&traces.join(format!("user{u:02}.csv")), &t).unwrap();
    }
    let short = UserTrace::from_urls("tiny", ["http://t.example/a"]).unwrap();
    write_trace_csv(&traces.join("tiny.csv"), &short).unwrap();
    dir.to_path_buf()
}

fn report_body(path: &Path) -> String {
    let mut v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("timing");
    serde_json::to_string_pretty(&v).unwrap()
}

fn csv_without(path: &Path, column: &str) -> String {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let drop = header.iter().position(|h| *h == column);
    std::iter::once(text.lines().next().unwrap_or(""))
        .chain(lines)
        .map(|l| {
            l.split(',')
                .enumerate()
                .filter(|(i, _)| Some(*i) != drop)
                .map(|(_, f)| f)
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn snapshot(dir: &Path) -> BTreeMap<String, String> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        let name = p.file_name().unwrap().to_string_lossy().to_string();
        let body = if name.ends_with(".json") {
            report_body(&p)
        } else if name.starts_with("sweep_") && !name.starts_with("sweep_means_") {
            csv_without(&p, "elapsed_ms")
        } else {
            fs::read_to_string(&p).unwrap()
        };
        files.insert(name, body);
    }
    files
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = fixture_log(&tmp.path().join("fixture"));
    let mut baseline: Option<(BTreeMap<String, String>, BTreeMap<String, String>)> = None;
    for workers in [1, 4, 8] {
        let mut eval = RunConfig::new(&input, tmp.path().join(format!("eval{workers}")));
        eval.workers = workers;
        eval.prune = Some(PruneSpec::new(PruneStrategy::Msd));
        eval.domain_cutoff = Some(0.10);
        cmd_evaluate(&eval).map_err(|e| e.to_string())?;

        let mut sweep = RunConfig::new(&input, tmp.path().join(format!("sweep{workers}")));
        sweep.workers = workers;
        sweep.sliding_window.window_sizes = vec![20, 50, 100];
        cmd_sweep(&sweep).map_err(|e| e.to_string())?;

        let snap = (snapshot(&eval.output_dir), snapshot(&sweep.output_dir));
        match &baseline {
            None => baseline = Some(snap),
            Some(b) => {
                for (label, base, now) in [("evaluate", &b.0, &snap.0), ("sweep", &b.1, &snap.1)] {
                    ensure(base.keys().eq(now.keys()), || {
                        format!("{label} file sets differ")
                    })?;
                    for (name, body) in base {
                        ensure(now.get(name) == Some(body), || {
                            format!("{label} {name} differs with {workers} workers")
                        })?;
                    }
                }
            }
        }
    }
    let b = baseline.unwrap();
    Ok(format!(
        "{} evaluate and {} sweep files identical for 1, 4, 8 workers",
        b.0.len(),
        b.1.len()
    ))
}

fn sweep_population() -> BTreeMap<String, UserTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let profile = SWEEP_PROFILE;
    (0..SWEEP_USERS)
        .map(|u| {
            let id = format!("s{u:03}");
            let len = rng.gen_range(1100..=2000);
            let t = bursty_user(&mut rng, &id, len, &profile);
            (id, t)
        })
        .collect()
}

fn saturating_sweep() -> Outcome {
    let started = Instant::now();
    let traces = sweep_population();
    let spec = SlidingWindowSpec::default();
    let largest = *DEFAULT_WINDOW_SIZES.last().unwrap();
    let mut summary = Vec::new();
    let mut problems = Vec::new();
    for a in Algorithm::ALL {
        let result =
            run_sweep(&traces, &PredictorConfig::new(a), &spec).map_err(|e| e.to_string())?;
        for m in [
            Metric::StaticPrecision,
            Metric::StaticRecall,
            Metric::DynamicRecall,
        ] {
            let series = result.mean_series(m);
            let scan = cutoff_scan(&series, SWEEP_EPSILON).map_err(|e| e.to_string())?;
            let sign = match scan.trend {
                Trend::Positive => 1.0,
                Trend::Negative => -1.0,
                Trend::Flat => 0.0,
            };
            let monotone = series.windows(2).all(|w| {
                let d = w[1].1 - w[0].1;
                d.abs() <= SWEEP_EPSILON || (sign != 0.0 && d * sign > 0.0)
            });
            let label = format!("{}/{}", a.name(), m.name());
            if !monotone {
                problems.push(format!("{label} not monotone: {series:?}"));
            }
            if scan.cutoff >= largest {
                problems.push(format!("{label} no cut-off below {largest}: {series:?}"));
            }
            summary.push(format!("{label}={}", scan.cutoff));
        }
    }
    let elapsed = started.elapsed();
    if !problems.is_empty() {
        return Err(problems.join("; "));
    }
    within(elapsed, 300)?;
    Ok(format!(
        "{SWEEP_USERS} users in {:.0}s, cut-offs {}",
        elapsed.as_secs_f64(),
        summary.join(" ")
    ))
}

fn throughput() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let profile = SWEEP_PROFILE;
    let users: Vec<UserTrace> = (0..THROUGHPUT_USERS)
        .map(|u| bursty_user(&mut rng, &format!("t{u}"), 1000, &profile))
        .collect();
    let mut means = BTreeMap::new();
    for a in Algorithm::ALL {
        let pc = PredictorConfig::new(a);
        let total: Duration = users
            .iter()
            .map(|t| run_user(t, &pc, &SplitSpec::default()).unwrap().elapsed)
            .sum();
        means.insert(a, total.as_secs_f64() * 1e3 / users.len() as f64);
    }
    let text = means
        .iter()
        .map(|(a, ms)| format!("{}={ms:.2}ms", a.name()))
        .collect::<Vec<_>>()
        .join(" ");
    for a in [Algorithm::Dg, Algorithm::Mp, Algorithm::Naive] {
        ensure(means[&a] < THROUGHPUT_LIMIT_MS, || {
            format!("{a} over {THROUGHPUT_LIMIT_MS}ms: {text}")
        })?;
    }
    let runner_up = [Algorithm::Dg, Algorithm::Mp, Algorithm::Naive]
        .iter()
        .map(|a| means[a])
        .fold(0.0, f64::max);
    ensure(means[&Algorithm::Ppm] >= PPM_MARGIN * runner_up, || {
        format!("PPM not the slowest by {PPM_MARGIN}x: {text}")
    })?;
    Ok(text)
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (1, "oracle equivalence", oracle_equivalence),
        (2, "train equals update fold", train_equals_fold),
        (3, "Naive recall dominance", naive_dominance),
        (4, "normalization identity", normalization_identity),
        (5, "hand-traced fixtures", hand_traced_fixtures),
        (6, "pruning contracts", pruning_contracts),
        (7, "sliding-window counts", window_counts),
        (8, "determinism across workers", determinism),
        (9, "monotone-then-flat sweep means", saturating_sweep),
        (10, "throughput and PPM ordering", throughput),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("[PASS] {id:>2} {name}: {detail} ({secs:.2}s)"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {id:>2} {name}: {detail} ({secs:.2}s)");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
