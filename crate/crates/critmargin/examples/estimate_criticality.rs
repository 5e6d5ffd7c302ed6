//! Estimate true criticality (expected discounted-reward drop under n
//! consecutive random actions) with the adaptive trial loop, and compare
//! against exact enumeration of all |A|^n perturbation prefixes.
//!
//! ```bash
//! cargo run --release --example estimate_criticality
//! ```

use critmargin::agents::{greedy_policy, train_q_learning, EpsilonSchedule, QTable};
use critmargin::criticality::{
    estimate_true_criticality, exact_true_criticality_oracle, select_horizon, HorizonConfig,
    SamplingConfig,
};
use critmargin::envs::{make_env, ActionId, EnvSpec, Observation};
use critmargin::stats::Confidence;

fn main() -> critmargin::Result<()> {
    println!(
        "horizon for gamma 0.99 at 1% tail error: {} steps",
        select_horizon(0.99, 0.01)?
    );
    println!();

    // A hand-built corridor policy that always moves right.
    let corridor = EnvSpec::LineWorld { length: 4 };
    let mut table = QTable::zeroed(&corridor, 0.9)?;
    for s in 0..=4 {
        table.set(Observation(s), ActionId(1), 1.0);
    }
    let policy = greedy_policy(&table);
    let horizon = HorizonConfig::new(0.9, 0.01)?;
    let sampling = SamplingConfig::new(0.05, Confidence::new(0.95)?, 50, 1_000_000)?;

    let mut env = make_env(&corridor)?;
    env.reset(0);
    let snapshot = env.save_state();
    println!("{corridor} from the start state, right-moving policy:");
    println!("{:>3} {:>12} {:>12} {:>9} {:>10}", "n", "estimate", "exact", "trials", "converged");
    for n in [0u32, 1, 2, 3] {
        let exact = exact_true_criticality_oracle(&mut env, &policy, &snapshot, n, &horizon)?;
        let est =
            estimate_true_criticality(&mut env, &policy, &snapshot, n, &horizon, &sampling, 27)?;
        println!(
            "{n:>3} {:>12.5} {exact:>12.5} {:>9} {:>10}",
            est.value, est.trials, est.converged
        );
    }
    println!();

    // Same exercise on a trained cliff-grid policy, where a random action
    // can mean a 100-point fall.
    let grid = EnvSpec::GridCliff { rows: 3, cols: 4 };
    let table = train_q_learning(&grid, 3_000, 0.1, 0.99, EpsilonSchedule::default(), 17)?;
    let policy = greedy_policy(&table);
    let horizon = HorizonConfig::new(0.99, 0.01)?;
    let sampling = SamplingConfig::new(0.5, Confidence::new(0.95)?, 50, 200_000)?;

    let mut env = make_env(&grid)?;
    env.reset(0);
    let snapshot = env.save_state();
    println!("{grid} from the start state (next to the cliff), trained policy:");
    println!("{:>3} {:>12} {:>12} {:>9} {:>10}", "n", "estimate", "exact", "trials", "converged");
    for n in [1u32, 2, 3] {
        let exact = exact_true_criticality_oracle(&mut env, &policy, &snapshot, n, &horizon)?;
        let est =
            estimate_true_criticality(&mut env, &policy, &snapshot, n, &horizon, &sampling, 3)?;
        println!(
            "{n:>3} {:>12.4} {exact:>12.4} {:>9} {:>10}",
            est.value, est.trials, est.converged
        );
    }
    Ok(())
}
