//! The whole pipeline through the library API: train, collect, fit,
//! validate, report, with every artifact written to disk. Identical
//! configuration and seed reproduce every file byte for byte, regardless
//! of worker count.
//!
//! ```bash
//! cargo run --release --example full_pipeline
//! ```

use critmargin::envs::EnvSpec;
use critmargin::pipeline;
use critmargin::RunConfig;

fn main() -> critmargin::Result<()> {
    let mut config = RunConfig::new(EnvSpec::GridCliff { rows: 4, cols: 12 });
    config.s_set = vec![1, 2, 4];
    config.exclude_tail_steps = 4;
    config.episodes_natural = 100;
    config.episodes_uniform = 100;
    config.seed = 7;
    config.validation.proximity_episodes = 50;
    config.validation.coverage_band = (-1.0, 1.0);
    config.validate()?;

    let out = std::env::temp_dir().join("critmargin_full_pipeline");
    std::fs::create_dir_all(&out).map_err(|e| critmargin::Error::io(&out, e))?;

    let trained = pipeline::run_train(&config, &out)?;
    println!("train: mean return {:.2}", trained.mean_return);

    let policy = pipeline::build_policy(&config, &trained.table)?;
    let (tuples, stats) = pipeline::run_collect(&config, policy.as_ref(), &out)?;
    println!(
        "collect: {} tuples, {} trials, {} env steps",
        tuples.len(),
        stats.total_trials,
        stats.total_env_steps
    );

    let fit = pipeline::run_fit(&config, &tuples, &out)?;
    println!(
        "fit: margin table over [{:.3}, {:.3}] with sizes {:?}",
        fit.table.p_min(),
        fit.table.p_max(),
        fit.table.s_set
    );

    let validated = pipeline::run_validate(&config, &tuples, &fit.table, policy.as_ref(), &out)?;
    for e in &validated.coverage.entries {
        println!(
            "validate: n={} estimated eps_percentile {:+.4}",
            e.n, e.estimated_epsilon_percentile
        );
    }
    if validated.proximity.empty_failures {
        println!("validate: no failures (trained policy avoids the cliff)");
    }

    let report = pipeline::run_report(&config, &tuples, &fit.table, &out)?;
    println!(
        "report: D = {:.2}, percentile bound {:.4}",
        report.entries[0].d_estimate, report.entries[0].epsilon_percentile_bound
    );

    println!("\nartifacts in {}:", out.display());
    let mut names: Vec<_> = std::fs::read_dir(&out)
        .map_err(|e| critmargin::Error::io(&out, e))?
        .filter_map(|entry| entry.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect();
    names.sort();
    for name in names {
        println!("  {name}");
    }
    Ok(())
}
