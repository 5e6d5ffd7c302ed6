//! Collect (proxy, true-criticality) data tuples from both time-step
//! selection modes and write them as JSON lines.
//!
//! ```bash
//! cargo run --release --example collect_tuples
//! ```

use critmargin::agents::{greedy_policy, train_q_learning, EpsilonSchedule};
use critmargin::collect::{collect_tuples, write_tuples, CollectionConfig, SampleMode};
use critmargin::criticality::{HorizonConfig, SamplingConfig};
use critmargin::envs::EnvSpec;
use critmargin::stats::Confidence;

fn main() -> critmargin::Result<()> {
    let spec = EnvSpec::GridCliff { rows: 4, cols: 12 };
    let table = train_q_learning(&spec, 5_000, 0.1, 0.99, EpsilonSchedule::default(), 7)?;
    let policy = greedy_policy(&table);

    let config = CollectionConfig {
        s_set: vec![1, 2, 4],
        episodes_natural: 40,
        episodes_uniform: 40,
        exclude_tail_steps: 4,
        horizon: HorizonConfig::new(0.99, 0.01)?,
        sampling: SamplingConfig::new(0.2, Confidence::new(0.95)?, 10, 500)?,
        seed: 7,
    };
    let (tuples, stats) = collect_tuples(&spec, &policy, &config)?;
    println!(
        "collected {} tuples from {} episodes ({} skipped); {} criticality trials, \
         {} env steps",
        stats.tuples_emitted,
        stats.episodes_run,
        stats.episodes_skipped,
        stats.total_trials,
        stats.total_env_steps
    );

    for mode in [SampleMode::Natural, SampleMode::Uniform] {
        let sample = tuples.iter().find(|t| t.mode == mode).unwrap();
        println!("\nfirst {mode:?} tuple: episode {} t {}", sample.episode_id, sample.t);
        println!("  proxy {:.4}", sample.proxy);
        for (n, per) in &sample.per_n {
            println!(
                "  n={n}: c* {:+.4} (trials {}, stdev {:.3}, converged {})",
                per.c_star, per.trials, per.stdev, per.converged
            );
        }
    }

    let out = std::env::temp_dir().join("critmargin_tuples.jsonl");
    write_tuples(&tuples, &out)?;
    println!("\ntuples written to {}", out.display());
    Ok(())
}
