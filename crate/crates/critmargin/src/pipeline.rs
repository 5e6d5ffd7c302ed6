//! High-level pipeline steps behind the command-line front end: each step
//! consumes a [`RunConfig`] plus input artifacts and produces output files
//! with seeded, worker-count-independent content.

use std::fs;
use std::path::{Path, PathBuf};

use crate::agents::{
    evaluate_policy, greedy_policy, softmax_policy, train_q_learning, EpsilonSchedule, Policy,
    QTable,
};
use crate::collect::{collect_tuples, write_tuples, CollectStats, DataTuple};
use crate::config::{PolicyKind, RunConfig};
use crate::error::{Error, Result};
use crate::margins::export::{
    write_heatmap_csv, write_heatmap_svg, write_histogram_csv, write_kde_csv,
};
use crate::margins::{
    build_margin_table, filter_top_proxy, fit_kde, margin_error_report, BandwidthOverrides,
    CurveSet, KdeGrid, MarginErrorReport, MarginTable,
};
use crate::seeds;
use crate::validate::{
    coverage_table_text, cross_validate, error_table_text, failure_proximity,
    proximity_table_text, CoverageReport, ProximityReport,
};

/// Runs `f` inside a rayon pool with the configured worker count
/// (0 = default). All parallel stages aggregate in fixed order, so results
/// do not depend on this setting.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    if workers == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("worker pool");
    pool.install(f)
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub struct TrainOutcome {
    pub table: QTable,
    pub mean_return: f64,
    pub table_path: PathBuf,
}

/// Trains the tabular policy and writes the table plus an evaluation
/// summary (mean undiscounted return over 100 seeded episodes).
pub fn run_train(config: &RunConfig, out_dir: &Path) -> Result<TrainOutcome> {
    config.validate()?;
    let table = train_q_learning(
        &config.env,
        config.training.episodes,
        config.training.learning_rate,
        config.gamma,
        EpsilonSchedule {
            start: config.training.epsilon_start,
            end: config.training.epsilon_end,
        },
        config.seed,
    )?;
    let policy = greedy_policy(&table);
    let mean_return = evaluate_policy(&config.env, &policy, 100, config.seed)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let table_path = out_dir.join("qtable.json");
    table.save(&table_path)?;
    write_json(
        &serde_json::json!({
            "env": config.env.to_string(),
            "training_episodes": config.training.episodes,
            "mean_return_100_episodes": mean_return,
        }),
        &out_dir.join("train_summary.json"),
    )?;
    log::info!(
        "trained {} for {} episodes; mean return {mean_return:.3}",
        config.env,
        config.training.episodes
    );
    Ok(TrainOutcome {
        table,
        mean_return,
        table_path,
    })
}

/// Builds the configured deployment policy from a trained table.
pub fn build_policy(config: &RunConfig, table: &QTable) -> Result<Box<dyn Policy>> {
    Ok(match config.policy.kind {
        PolicyKind::Greedy => Box::new(greedy_policy(table)),
        PolicyKind::Softmax => Box::new(softmax_policy(table, config.policy.temperature)?),
    })
}

/// Runs data collection and writes the JSON-lines tuple file.
pub fn run_collect(
    config: &RunConfig,
    policy: &dyn Policy,
    out_dir: &Path,
) -> Result<(Vec<DataTuple>, CollectStats)> {
    let collection = config.collection()?;
    let (tuples, stats) =
        with_workers(config.workers, || collect_tuples(&config.env, policy, &collection))?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_tuples(&tuples, &out_dir.join("tuples.jsonl"))?;
    log::info!(
        "collected {} tuples ({} episodes, {} skipped, {} trials, {} env steps)",
        stats.tuples_emitted,
        stats.episodes_run,
        stats.episodes_skipped,
        stats.total_trials,
        stats.total_env_steps
    );
    Ok((tuples, stats))
}

pub struct FitArtifacts {
    pub filtered: Vec<DataTuple>,
    pub fits: Vec<(KdeGrid, CurveSet)>,
    pub table: MarginTable,
}

/// Filters the top proxies, fits one density per perturbation size, builds
/// the margin table, and writes the table plus density, heatmap, and
/// histogram exports.
pub fn run_fit(config: &RunConfig, tuples: &[DataTuple], out_dir: &Path) -> Result<FitArtifacts> {
    config.validate()?;
    let beta = config.beta_confidence()?;
    let sampling = config.sampling()?;
    let filtered = filter_top_proxy(tuples, config.filter_fraction);
    let fits = with_workers(config.workers, || {
        config
            .s_set
            .iter()
            .map(|&n| fit_kde(&filtered, n, beta, &sampling, &BandwidthOverrides::default()))
            .collect::<Result<Vec<_>>>()
    })?;
    let table = build_margin_table(&fits, &config.s_set, &config.digest())?;

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    table.save(&out_dir.join("margin_table.json"))?;
    for (grid, curves) in &fits {
        write_kde_csv(grid, &out_dir.join(format!("kde_n{}.csv", curves.n)))?;
    }
    write_heatmap_csv(&table, &out_dir.join("heatmap.csv"))?;
    write_heatmap_svg(
        &table,
        &format!("safety margins: {}", config.env),
        &out_dir.join("heatmap.svg"),
    )?;
    write_histogram_csv(tuples, &out_dir.join("histogram.csv"))?;
    log::info!(
        "fit {} densities over {} tuples (h_p {:.5})",
        fits.len(),
        filtered.len(),
        table.h_p
    );
    Ok(FitArtifacts {
        filtered,
        fits,
        table,
    })
}

pub struct ValidateArtifacts {
    pub coverage: CoverageReport,
    pub proximity: ProximityReport,
    pub coverage_in_band: bool,
}

/// Cross-validates percentile coverage on the tuples and measures margins
/// near failures with fresh seeded episodes; writes JSON reports and a
/// text summary.
pub fn run_validate(
    config: &RunConfig,
    tuples: &[DataTuple],
    table: &MarginTable,
    policy: &dyn Policy,
    out_dir: &Path,
) -> Result<ValidateArtifacts> {
    config.validate()?;
    let beta = config.beta_confidence()?;
    let sampling = config.sampling()?;
    let coverage = with_workers(config.workers, || {
        cross_validate(
            tuples,
            config.validation.train_fraction,
            beta,
            config.filter_fraction,
            &sampling,
            seeds::mix(&[seeds::STREAM_SPLIT, config.seed]),
        )
    })?;
    let proximity = with_workers(config.workers, || {
        failure_proximity(
            &config.env,
            policy,
            table,
            config.validation.proximity_episodes,
            &config.validation.zetas,
            &config.validation.offsets,
            config.validation.top_fraction,
            config.seed,
        )
    })?;

    // The configured band widens by the theoretical percentile bound from
    // the training split, so the check tracks what the data can support.
    let (band_lo, band_hi) = config.validation.coverage_band;
    let slack = coverage.percentile_bound;
    let coverage_in_band = coverage.entries.iter().all(|e| {
        e.estimated_epsilon_percentile >= band_lo - slack
            && e.estimated_epsilon_percentile <= band_hi + slack
    });

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_json(&coverage, &out_dir.join("coverage_report.json"))?;
    write_json(&proximity, &out_dir.join("proximity_report.json"))?;
    let policy_label = match config.policy.kind {
        PolicyKind::Greedy => "greedy",
        PolicyKind::Softmax => "softmax",
    };
    let text = format!(
        "{}\n{}",
        coverage_table_text(&config.env.to_string(), policy_label, &coverage),
        proximity_table_text(&proximity)
    );
    fs::write(out_dir.join("validation_report.txt"), &text)
        .map_err(|e| Error::io(out_dir.join("validation_report.txt"), e))?;
    log::info!(
        "coverage in band: {coverage_in_band}; failures observed: {}",
        proximity.failures
    );
    Ok(ValidateArtifacts {
        coverage,
        proximity,
        coverage_in_band,
    })
}

/// Builds the effective-sample-size / percentile-bound report for a fitted
/// table, using the same top-proxy filter the fit used.
pub fn run_report(
    config: &RunConfig,
    tuples: &[DataTuple],
    table: &MarginTable,
    out_dir: &Path,
) -> Result<MarginErrorReport> {
    config.validate()?;
    let filtered = filter_top_proxy(tuples, config.filter_fraction);
    let report = margin_error_report(table, &filtered, config.alpha_confidence()?)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_json(&report, &out_dir.join("error_report.json"))?;
    let policy_label = match config.policy.kind {
        PolicyKind::Greedy => "greedy",
        PolicyKind::Softmax => "softmax",
    };
    let text = error_table_text(&config.env.to_string(), policy_label, &report);
    fs::write(out_dir.join("error_report.txt"), &text)
        .map_err(|e| Error::io(out_dir.join("error_report.txt"), e))?;
    Ok(report)
}
