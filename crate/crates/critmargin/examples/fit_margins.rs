//! Fit the (proxy, criticality) density, extract percentile curves, apply
//! the monotone adjustment, and compile a safety-margin table with CSV and
//! SVG exports.
//!
//! ```bash
//! cargo run --release --example fit_margins
//! ```

use critmargin::agents::{greedy_policy, train_q_learning, EpsilonSchedule};
use critmargin::collect::{collect_tuples, CollectionConfig};
use critmargin::criticality::{HorizonConfig, SamplingConfig};
use critmargin::envs::EnvSpec;
use critmargin::margins::export::{write_heatmap_csv, write_heatmap_svg, write_kde_csv};
use critmargin::margins::{
    build_margin_table, filter_top_proxy, fit_kde, BandwidthOverrides,
};
use critmargin::stats::Confidence;

fn main() -> critmargin::Result<()> {
    let spec = EnvSpec::GridCliff { rows: 4, cols: 12 };
    let table = train_q_learning(&spec, 5_000, 0.1, 0.99, EpsilonSchedule::default(), 7)?;
    let policy = greedy_policy(&table);
    let sampling = SamplingConfig::new(0.2, Confidence::new(0.95)?, 10, 500)?;
    let config = CollectionConfig {
        s_set: vec![1, 2, 4],
        episodes_natural: 50,
        episodes_uniform: 50,
        exclude_tail_steps: 4,
        horizon: HorizonConfig::new(0.99, 0.01)?,
        sampling,
        seed: 7,
    };
    let (tuples, _) = collect_tuples(&spec, &policy, &config)?;

    // Drop the top 5% of proxies (sparse, noisy) before fitting.
    let filtered = filter_top_proxy(&tuples, 0.05);
    println!("fitting on {} of {} tuples", filtered.len(), tuples.len());

    let beta = Confidence::new(0.95)?;
    let fits: Vec<_> = config
        .s_set
        .iter()
        .map(|&n| fit_kde(&filtered, n, beta, &config.sampling, &BandwidthOverrides::default()))
        .collect::<critmargin::Result<_>>()?;

    for (grid, curves) in &fits {
        let mid = critmargin::margins::GRID_BINS / 2;
        println!(
            "n={}: bandwidths h_p {:.4} h_c {:.4}; mid-column mean {:+.3} median {:+.3} \
             95th percentile {:+.3}",
            curves.n,
            grid.h_p,
            grid.h_c,
            curves.mean_curve[mid],
            curves.median_curve[mid],
            curves.percentile_curve[mid],
        );
    }

    let margin_table = build_margin_table(&fits, &config.s_set, "fit_margins example")?;
    let dir = std::env::temp_dir();
    margin_table.save(&dir.join("critmargin_table.json"))?;
    write_kde_csv(&fits[0].0, &dir.join("critmargin_kde_n1.csv"))?;
    write_heatmap_csv(&margin_table, &dir.join("critmargin_heatmap.csv"))?;
    write_heatmap_svg(
        &margin_table,
        "safety margins: grid_cliff(4,12)",
        &dir.join("critmargin_heatmap.svg"),
    )?;
    println!(
        "table, density CSV, heatmap CSV and SVG written under {}",
        dir.display()
    );
    Ok(())
}
