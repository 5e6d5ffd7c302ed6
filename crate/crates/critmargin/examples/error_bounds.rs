//! Percentile-error bounds from effective sample sizes: how many tuples
//! effectively support a density column, and how far the fitted percentile's
//! coverage can fall below the nominal level.
//!
//! ```bash
//! cargo run --release --example error_bounds
//! ```

use critmargin::stats::{
    effective_sample_size, percentile_error_bound, Confidence, Kernel,
};

fn main() -> critmargin::Result<()> {
    let alpha = Confidence::new(0.95)?;
    let beta = Confidence::new(0.95)?;

    println!(
        "{:>10} {:>10} {:>12} {:>10} {:>14} {:>14}",
        "m_uniform", "bandwidth", "proxy range", "D", "tighter bound", "looser bound"
    );
    for (m, h, range) in [
        (363usize, 0.13, 1.424),
        (368, 1.70, 15.33),
        (361, 0.03, 0.3866),
        (361, 0.77, 8.797),
        (1000, 0.10, 1.0),
        (100, 0.10, 1.0),
    ] {
        let d = effective_sample_size(m, h, range, Kernel::Gaussian, true)?;
        let bound = percentile_error_bound(d, beta, alpha);
        println!(
            "{m:>10} {h:>10.2} {range:>12.3} {:>10.2} {:>14.4} {:>14.4}{}",
            d.value(),
            bound.tighter,
            bound.looser,
            if bound.normal_approx_warning { "  (low-sample warning)" } else { "" }
        );
    }

    println!();
    println!("the tighter bound solves eps = z * sqrt(b*(1-b*)) / sqrt(D) exactly;");
    println!("the looser one uses sqrt(b*(1-b*)) <= 1/2. Both shrink as 1/sqrt(D),");
    println!("so doubling the kernel count per column roughly divides the bound by 1.4.");
    Ok(())
}
