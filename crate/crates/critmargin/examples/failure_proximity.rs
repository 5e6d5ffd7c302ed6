//! Margins near failures: an under-trained cliff policy walks itself off
//! the cliff; margins read shortly before the fall are compared against the
//! per-episode average.
//!
//! ```bash
//! cargo run --release --example failure_proximity
//! ```

use critmargin::agents::{greedy_policy, train_q_learning, EpsilonSchedule};
use critmargin::collect::{collect_tuples, CollectionConfig};
use critmargin::criticality::{HorizonConfig, SamplingConfig};
use critmargin::envs::EnvSpec;
use critmargin::margins::{build_margin_table, filter_top_proxy, fit_kde, BandwidthOverrides};
use critmargin::stats::Confidence;
use critmargin::validate::{failure_proximity, proximity_table_text};

fn main() -> critmargin::Result<()> {
    let spec = EnvSpec::GridCliff { rows: 4, cols: 12 };
    // Deliberately under-trained: 20 episodes with a high learning rate.
    let q = train_q_learning(
        &spec,
        20,
        0.8,
        0.99,
        EpsilonSchedule { start: 1.0, end: 0.3 },
        1,
    )?;
    let policy = greedy_policy(&q);

    let collection = CollectionConfig {
        s_set: vec![1, 2, 4],
        episodes_natural: 60,
        episodes_uniform: 60,
        exclude_tail_steps: 4,
        horizon: HorizonConfig::new(0.99, 0.01)?,
        sampling: SamplingConfig::new(0.2, Confidence::new(0.95)?, 10, 300)?,
        seed: 5,
    };
    let (tuples, _) = collect_tuples(&spec, &policy, &collection)?;
    let filtered = filter_top_proxy(&tuples, 0.05);
    let beta = Confidence::new(0.95)?;
    let fits: Vec<_> = collection
        .s_set
        .iter()
        .map(|&n| fit_kde(&filtered, n, beta, &collection.sampling, &BandwidthOverrides::default()))
        .collect::<critmargin::Result<_>>()?;
    let table = build_margin_table(&fits, &collection.s_set, "failure_proximity example")?;

    let zeta_mid = table.zeta_axis()[50];
    println!("margin table fitted from the policy's own data; mid-range zeta {zeta_mid:.3}");
    let report = failure_proximity(
        &spec,
        &policy,
        &table,
        100,
        &[zeta_mid],
        &[1, 2, 4],
        0.05,
        3,
    )?;
    println!();
    print!("{}", proximity_table_text(&report));
    println!();
    println!("margins shrink as the fall approaches, flagging the decisions a");
    println!("supervisor would most want to review.");
    Ok(())
}
