//! Shared helpers for the integration suites: synthetic tuple generation
//! with a known conditional distribution, and seeded Gaussian noise.

use std::collections::BTreeMap;

use critmargin::collect::{DataTuple, PerNStats, SampleMode};
use critmargin::seeds;
use rand::Rng;

/// Standard-normal draw via Box-Muller.
pub fn gaussian(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Conditional criticality scale for perturbation size `n`.
pub fn synthetic_slope(n: u32) -> f64 {
    (1.0 + f64::from(n)).ln()
}

/// Conditional noise level for perturbation size `n`.
pub fn synthetic_sigma(n: u32) -> f64 {
    0.5 + 0.12 * f64::from(n).sqrt()
}

/// Tuples with a known conditional distribution:
/// `c | p ~ Normal(slope_n * p, sigma_n)`. Natural-mode proxies are
/// right-skewed (squared uniform), uniform-mode proxies are uniform, both
/// over [0, 2].
pub fn synthetic_tuples(m_per_mode: usize, s_set: &[u32], seed: u64) -> Vec<DataTuple> {
    let mut out = Vec::with_capacity(2 * m_per_mode);
    let mut id = 0u64;
    for mode in [SampleMode::Natural, SampleMode::Uniform] {
        let mut rng = seeds::rng(&[0x5A17, seed, mode as u64]);
        for _ in 0..m_per_mode {
            let u: f64 = rng.random();
            let proxy = match mode {
                SampleMode::Natural => 2.0 * u * u,
                SampleMode::Uniform => 2.0 * u,
            };
            let mut per_n = BTreeMap::new();
            for &n in s_set {
                let sigma = synthetic_sigma(n);
                per_n.insert(
                    n,
                    PerNStats {
                        c_star: synthetic_slope(n) * proxy + sigma * gaussian(&mut rng),
                        trials: 40,
                        stdev: sigma,
                        converged: true,
                    },
                );
            }
            out.push(DataTuple {
                episode_id: id,
                t: 0,
                mode,
                proxy,
                per_n,
            });
            id += 1;
        }
    }
    out
}
