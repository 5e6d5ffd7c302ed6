//! Query a margin table across proxy values and tolerances, showing the
//! prefix rule: the margin is the largest n whose whole prefix of
//! percentile curves stays within the tolerance.
//!
//! ```bash
//! cargo run --release --example query_margins
//! ```

use std::collections::BTreeMap;

use critmargin::collect::{DataTuple, PerNStats, SampleMode};
use critmargin::margins::{build_margin_table, fit_kde, BandwidthOverrides};
use critmargin::criticality::SamplingConfig;
use critmargin::stats::Confidence;

/// Synthetic tuples where criticality grows with both the proxy and the
/// perturbation size.
fn synthetic_tuples() -> Vec<DataTuple> {
    let mut rng = critmargin::seeds::rng(&[0xEC0]);
    use rand::Rng;
    (0..600u64)
        .map(|id| {
            let proxy = 2.0 * rng.random::<f64>();
            let mut per_n = BTreeMap::new();
            for n in [1u32, 2, 4, 8] {
                let scale = (1.0 + f64::from(n)).ln();
                let noise: f64 = rng.random::<f64>() - 0.5;
                per_n.insert(
                    n,
                    PerNStats {
                        c_star: scale * proxy + noise,
                        trials: 30,
                        stdev: 0.3,
                        converged: true,
                    },
                );
            }
            DataTuple {
                episode_id: id,
                t: 0,
                mode: if id % 2 == 0 { SampleMode::Natural } else { SampleMode::Uniform },
                proxy,
                per_n,
            }
        })
        .collect()
}

fn main() -> critmargin::Result<()> {
    let tuples = synthetic_tuples();
    let beta = Confidence::new(0.95)?;
    let sampling = SamplingConfig::new(0.2, Confidence::new(0.95)?, 10, 100)?;
    let s_set = [1u32, 2, 4, 8];
    let fits: Vec<_> = s_set
        .iter()
        .map(|&n| fit_kde(&tuples, n, beta, &sampling, &BandwidthOverrides::default()))
        .collect::<critmargin::Result<_>>()?;
    let table = build_margin_table(&fits, &s_set, "query_margins example")?;

    let proxies = [0.1, 0.5, 1.0, 1.5, 1.9, 5.0];
    let zetas = [0.5, 1.0, 2.0, 4.0, 8.0];
    print!("{:>28}", "margin at zeta =");
    for z in zetas {
        print!("{z:>6.1}");
    }
    println!();
    for p in proxies {
        print!("proxy {p:>5.2}{:>16}", "");
        for z in zetas {
            print!("{:>6}", table.query_margin(p, z));
        }
        if p > table.p_max() {
            print!("   (above the fitted range: conservative 0)");
        }
        println!();
    }
    println!();
    println!("margins never grow with the proxy and never shrink with the tolerance;");
    println!("a proxy above the fitted range always maps to margin 0.");
    Ok(())
}
