use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use prefetch_eval::commands::{self, RunConfig};
use prefetch_eval::ingest::LogFormat;
use prefetch_eval::prune::{PruneSpec, PruneStrategy, DEFAULT_KEEP_FRACTION};
use prefetch_eval::sweep::SlidingDistance;
use prefetch_eval::Algorithm;

#[derive(Parser)]
#[command(
    name = "prefetch-eval",
    version,
    about = "Evaluate web prefetching models on request traces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize a raw request log into per-user trace files.
    Ingest(Common),
    /// Report repeated-request statistics per user.
    Stats(Common),
    /// Train and replay every user with the selected models.
    Evaluate(EvalArgs),
    /// Sliding-window sweep over training-set sizes.
    Sweep(SweepArgs),
    /// Check the engine and models against a brute-force reference.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        cases: usize,
    },
}

#[derive(Args)]
struct Common {
    /// Log file, or a directory of trace files.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "csv")]
    format: LogFormat,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Fail on the first malformed row instead of skipping it.
    #[arg(long)]
    strict: bool,
    /// Users with fewer requests are dropped during ingestion.
    #[arg(long, default_value_t = prefetch_eval::ingest::DEFAULT_MIN_REQUESTS)]
    min_requests: usize,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct ModelArgs {
    #[command(flatten)]
    common: Common,
    /// Repeatable; defaults to all four models.
    #[arg(long = "algo")]
    algorithms: Vec<Algorithm>,
    #[arg(long, default_value_t = prefetch_eval::engine::DEFAULT_TRAINING_RATIO)]
    ratio: f64,
    /// Lookahead window for DG and MP.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    ppm_order: Option<usize>,
    #[arg(long)]
    top_n: Option<usize>,
    /// Drop domains whose repeated fraction is below this value.
    #[arg(long)]
    domain_cutoff: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    prune: Option<PruneStrategy>,
    #[arg(long, default_value_t = DEFAULT_KEEP_FRACTION)]
    keep_fraction: f64,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Comma-separated window sizes.
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    /// Slide distance: a number, or `auto` for the test-part length.
    #[arg(long, default_value = "auto")]
    distance: SlidingDistance,
    #[arg(long, default_value_t = prefetch_eval::sweep::DEFAULT_CUTOFF_EPSILON)]
    epsilon: f64,
}

fn base_config(c: &Common) -> RunConfig {
    let mut config = RunConfig::new(&c.input, &c.out);
    config.format = c.format;
    config.strict = c.strict;
    config.min_requests = c.min_requests;
    if let Some(w) = c.workers {
        config.workers = w;
    }
    config
}

fn model_config(m: &ModelArgs) -> RunConfig {
    let mut config = base_config(&m.common);
    if !m.algorithms.is_empty() {
        config.algorithms = m.algorithms.clone();
    }
    config.split.training_ratio = m.ratio;
    config.sliding_window.training_ratio = m.ratio;
    config.predictor.lookahead_window = m.window;
    config.predictor.confidence_threshold = m.threshold;
    config.predictor.ppm_order = m.ppm_order;
    config.predictor.top_n = m.top_n;
    config.domain_cutoff = m.domain_cutoff;
    config.seed = m.seed;
    config
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Ingest(c) => {
            let s = commands::cmd_ingest(&base_config(&c)).context("ingest failed")?;
            println!(
                "{} rows read, {} users kept ({} removed as outliers), {} requests",
                s.load.rows_read,
                s.users_kept,
                s.outliers.removed_users().len(),
                s.requests_kept
            );
        }
        Command::Stats(c) => {
            let r = commands::cmd_stats(&base_config(&c)).context("stats failed")?;
            println!(
                "{} users, repeated fraction min {:.3} avg {:.3} max {:.3} sd {:.3}",
                r.users.len(),
                r.repeated_pct.min,
                r.repeated_pct.avg,
                r.repeated_pct.max,
                r.repeated_pct.sd
            );
        }
        Command::Evaluate(a) => {
            let mut config = model_config(&a.model);
            config.prune = a.prune.map(|s| PruneSpec {
                strategy: s,
                keep_fraction: a.keep_fraction,
            });
            let r = commands::cmd_evaluate(&config).context("evaluate failed")?;
            for g in &r.aggregates {
                let show = |m| {
                    g.means
                        .get(&m)
                        .and_then(|v| v.mean)
                        .map_or("n/a".to_string(), |x| format!("{x:.4}"))
                };
                println!(
                    "{:<5} {:<5} users {:>5}  SP {}  SR {}  DR {}",
                    g.algorithm.name(),
                    g.variant,
                    g.users,
                    show(prefetch_eval::Metric::StaticPrecision),
                    show(prefetch_eval::Metric::StaticRecall),
                    show(prefetch_eval::Metric::DynamicRecall)
                );
            }
            if !r.skipped.is_empty() {
                println!("{} users skipped", r.skipped.len());
            }
        }
        Command::Sweep(a) => {
            let mut config = model_config(&a.model);
            if !a.sizes.is_empty() {
                config.sliding_window.window_sizes = a.sizes.clone();
            }
            config.sliding_window.sliding_distance = a.distance;
            config.cutoff_epsilon = a.epsilon;
            let r = commands::cmd_sweep(&config).context("sweep failed")?;
            for (alg, s) in &r.algorithms {
                let cut = s
                    .cutoffs
                    .iter()
                    .map(|(m, c)| {
                        let v = c
                            .as_ref()
                            .map_or("none".to_string(), |c| c.cutoff.to_string());
                        format!("{}={v}", m.name())
                    })
                    .collect::<Vec<_>>()
                    .join(" ");
                println!(
                    "{:<5} {} models, cut-off {cut}",
                    alg.name(),
                    s.models_evaluated
                );
            }
        }
        Command::Selftest { seed, cases } => {
            let r = commands::run_selftest(seed, cases);
            println!(
                "{} traces, {} engine and {} fold comparisons, {} dominance checks",
                r.traces, r.engine_comparisons, r.fold_comparisons, r.dominance_checks
            );
            if !r.passed() {
                for f in r.failures.iter().take(20) {
                    eprintln!("{f}");
                }
                bail!("{} self-test failures", r.failures.len());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
