//! Train a tabular Q-learning policy on the cliff grid, evaluate it, and
//! save the table for the other examples.
//!
//! ```bash
//! cargo run --release --example train_policy
//! ```

use critmargin::agents::{evaluate_policy, greedy_policy, train_q_learning, EpsilonSchedule};
use critmargin::envs::{make_env, EnvSpec};

fn main() -> critmargin::Result<()> {
    let spec = EnvSpec::GridCliff { rows: 4, cols: 12 };
    println!("training {spec} for 5000 episodes...");
    let table = train_q_learning(&spec, 5_000, 0.1, 0.99, EpsilonSchedule::default(), 7)?;
    let policy = greedy_policy(&table);

    let mean_return = evaluate_policy(&spec, &policy, 100, 1)?;
    println!("mean undiscounted return over 100 episodes: {mean_return:.2}");
    println!("(the shortest safe path costs -13)");

    // Walk the greedy trajectory once.
    let mut env = make_env(&spec)?;
    env.reset(0);
    let mut cells = vec![env.observation().0];
    while !env.is_terminal() {
        env.step(critmargin::agents::Policy::act(&policy, env.observation()))?;
        cells.push(env.observation().0);
    }
    println!("greedy trajectory (cell ids): {cells:?}");

    let out = std::env::temp_dir().join("critmargin_qtable.json");
    table.save(&out)?;
    println!("table saved to {}", out.display());
    Ok(())
}
