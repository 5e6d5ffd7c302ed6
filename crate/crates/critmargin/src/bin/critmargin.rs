//! Command-line front end for the critmargin pipeline. All heavy lifting
//! lives in the library; this binary parses arguments, wires files
//! together, and maps errors to exit codes:
//! 0 success, 1 internal error, 2 missing or invalid input artifact,
//! 3 statistical degeneracy.

use std::io::BufRead;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use critmargin::agents::QTable;
use critmargin::collect::read_tuples;
use critmargin::config::RunConfig;
use critmargin::error::Error;
use critmargin::margins::MarginTable;
use critmargin::pipeline;

#[derive(Parser)]
#[command(
    name = "critmargin",
    about = "Criticality estimation and safety-margin tables for tabular RL agents",
    version
)]
struct Cli {
    /// Run configuration (JSON). Required by every command except `margin`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Parallel worker threads (0 = all cores); outputs are identical for
    /// any value.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory (default: current directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the tabular policy and write qtable.json plus a summary.
    Train,
    /// Roll out episodes and write the criticality tuple file.
    Collect {
        /// Trained q-table (falls back to policy.table_path in the config).
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Fit densities and write the margin table, heatmap, and histograms.
    Fit {
        /// Tuple file produced by `collect`.
        #[arg(long)]
        tuples: PathBuf,
    },
    /// Query a margin table. Prints one integer per query.
    Margin {
        /// Margin table produced by `fit`.
        #[arg(long)]
        table: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        proxy: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        zeta: Option<f64>,
        /// Read whitespace-separated "proxy zeta" pairs from stdin.
        #[arg(long)]
        batch: bool,
    },
    /// Cross-validate coverage and measure failure proximity.
    Validate {
        #[arg(long)]
        tuples: PathBuf,
        #[arg(long)]
        table: PathBuf,
        /// Trained q-table for fresh validation episodes.
        #[arg(long)]
        qtable: Option<PathBuf>,
    },
    /// Write the effective-sample-size and percentile-bound report.
    Report {
        #[arg(long)]
        tuples: PathBuf,
        #[arg(long)]
        table: PathBuf,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Io { .. }
        | Error::Config(_)
        | Error::Parse { .. }
        | Error::SnapshotFormat(_)
        | Error::Table(_)
        | Error::InvalidArgument(_) => 2,
        Error::Fit(_) | Error::Validation(_) | Error::Collection(_) => 3,
        Error::EnvUsage(_) | Error::TrainingFailure(_) | Error::Capacity(_) => 1,
    }
}

fn load_config(cli: &Cli) -> critmargin::Result<RunConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required for this command".into()))?;
    let mut config = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(workers) = cli.workers {
        config.workers = workers;
    }
    config.validate()?;
    Ok(config)
}

fn qtable_path(
    explicit: &Option<PathBuf>,
    config: &RunConfig,
) -> critmargin::Result<PathBuf> {
    explicit
        .clone()
        .or_else(|| config.policy.table_path.clone())
        .ok_or_else(|| {
            Error::Config("no q-table given: pass --table or set policy.table_path".into())
        })
}

fn run(cli: &Cli) -> critmargin::Result<()> {
    let out_dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    match &cli.command {
        Command::Train => {
            let config = load_config(cli)?;
            let outcome = pipeline::run_train(&config, &out_dir)?;
            println!(
                "trained {}; mean return over 100 episodes: {:.4}; table: {}",
                config.env,
                outcome.mean_return,
                outcome.table_path.display()
            );
        }
        Command::Collect { table } => {
            let config = load_config(cli)?;
            let table = QTable::load(&qtable_path(table, &config)?)?;
            let policy = pipeline::build_policy(&config, &table)?;
            let (tuples, stats) = pipeline::run_collect(&config, policy.as_ref(), &out_dir)?;
            println!(
                "wrote {} tuples ({} episodes run, {} skipped, {} trials, {} env steps)",
                tuples.len(),
                stats.episodes_run,
                stats.episodes_skipped,
                stats.total_trials,
                stats.total_env_steps
            );
        }
        Command::Fit { tuples } => {
            let config = load_config(cli)?;
            let tuples = read_tuples(tuples)?;
            let fit = pipeline::run_fit(&config, &tuples, &out_dir)?;
            println!(
                "fit {} perturbation sizes over {} tuples; margin table: {}",
                fit.fits.len(),
                fit.filtered.len(),
                out_dir.join("margin_table.json").display()
            );
        }
        Command::Margin {
            table,
            proxy,
            zeta,
            batch,
        } => {
            let table = MarginTable::load(table)?;
            if *batch {
                let stdin = std::io::stdin();
                for (idx, line) in stdin.lock().lines().enumerate() {
                    let line = line.map_err(|e| Error::io("stdin", e))?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let mut parts = line.split_whitespace();
                    let parse = |s: Option<&str>| -> critmargin::Result<f64> {
                        s.and_then(|v| v.parse().ok()).ok_or_else(|| Error::Parse {
                            line: idx + 1,
                            message: format!("expected `proxy zeta`, got `{line}`"),
                        })
                    };
                    let p = parse(parts.next())?;
                    let z = parse(parts.next())?;
                    println!("{}", table.query_margin(p, z));
                }
            } else {
                let (Some(p), Some(z)) = (proxy, zeta) else {
                    return Err(Error::Config(
                        "margin needs --proxy and --zeta (or --batch)".into(),
                    ));
                };
                println!("{}", table.query_margin(*p, *z));
            }
        }
        Command::Validate {
            tuples,
            table,
            qtable,
        } => {
            let config = load_config(cli)?;
            let tuples = read_tuples(tuples)?;
            let table = MarginTable::load(table)?;
            let q = QTable::load(&qtable_path(qtable, &config)?)?;
            let policy = pipeline::build_policy(&config, &q)?;
            let artifacts =
                pipeline::run_validate(&config, &tuples, &table, policy.as_ref(), &out_dir)?;
            for entry in &artifacts.coverage.entries {
                println!(
                    "n={:<3} success_rate={:.4} estimated_eps_percentile={:+.4}",
                    entry.n, entry.success_rate, entry.estimated_epsilon_percentile
                );
            }
            if artifacts.proximity.empty_failures {
                println!("no failures observed across validation episodes");
            } else {
                println!(
                    "failures: {} of {} episodes; top-proxy fraction before failure: {:.2}",
                    artifacts.proximity.failures,
                    artifacts.proximity.episodes,
                    artifacts.proximity.top_fraction_before_failure
                );
            }
            if !artifacts.coverage_in_band {
                let (lo, hi) = config.validation.coverage_band;
                return Err(Error::Validation(format!(
                    "estimated percentile error left the configured band [{lo}, {hi}]"
                )));
            }
        }
        Command::Report { tuples, table } => {
            let config = load_config(cli)?;
            let tuples = read_tuples(tuples)?;
            let table = MarginTable::load(table)?;
            let report = pipeline::run_report(&config, &tuples, &table, &out_dir)?;
            for entry in &report.entries {
                println!(
                    "n={:<3} h_p={:.4} m_uniform={} d={:.2} eps_percentile_bound={:.4}",
                    entry.n,
                    entry.h_p,
                    entry.m_uniform,
                    entry.d_estimate,
                    entry.epsilon_percentile_bound
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::new()
            .filter_or("CRITMARGIN_LOG", "warn")
            .write_style("CRITMARGIN_LOG_STYLE"),
    )
    .format_timestamp(None)
    .init();

    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
