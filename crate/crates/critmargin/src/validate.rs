//! Empirical checks of the framework's guarantees: held-out coverage of the
//! percentile curves, margin behavior near failures, and the margin error
//! introduced by evaluating only a sparse set of perturbation sizes.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::Policy;
use crate::collect::{collect_tuples, run_episode, CollectionConfig, DataTuple, SampleMode};
use crate::criticality::SamplingConfig;
use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::margins::{
    build_margin_table, filter_top_proxy, fit_kde, BandwidthOverrides, MarginTable, GRID_BINS,
};
use crate::seeds;
use crate::stats::Confidence;

// ---------------------------------------------------------------------------
// Cross-validated percentile coverage
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageEntry {
    pub n: u32,
    pub success_rate: f64,
    /// `beta - success_rate`: positive means the curve under-covers.
    pub estimated_epsilon_percentile: f64,
    pub test_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageReport {
    pub beta: Confidence,
    pub train_count: usize,
    pub test_count: usize,
    /// Theoretical bound on the underestimation side, computed from the
    /// training split's effective sample size.
    pub percentile_bound: f64,
    pub entries: Vec<CoverageEntry>,
}

/// Splits the tuples into train/test sets (stratified by sampling mode,
/// shuffled by the seed), fits raw percentile curves on the filtered
/// training split, and measures how often held-out criticalities stay below
/// the curve at their nearest proxy bin.
///
/// The curves are deliberately left non-monotone here; the running-maximum
/// adjustment is a table-construction step and would mask coverage defects.
pub fn cross_validate(
    tuples: &[DataTuple],
    train_fraction: f64,
    beta: Confidence,
    filter_fraction: f64,
    sampling: &SamplingConfig,
    seed: u64,
) -> Result<CoverageReport> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut train: Vec<DataTuple> = Vec::new();
    let mut test: Vec<DataTuple> = Vec::new();
    for mode in [SampleMode::Natural, SampleMode::Uniform] {
        let mut group: Vec<&DataTuple> = tuples.iter().filter(|t| t.mode == mode).collect();
        if group.is_empty() {
            continue;
        }
        let mut rng = seeds::rng(&[seeds::STREAM_SPLIT, seed, mode as u64]);
        group.shuffle(&mut rng);
        let cut = (train_fraction * group.len() as f64).floor() as usize;
        if cut == 0 || cut == group.len() {
            return Err(Error::Validation(format!(
                "split leaves an empty side for {mode:?} mode \
                 ({} tuples at fraction {train_fraction})",
                group.len()
            )));
        }
        train.extend(group[..cut].iter().map(|t| (*t).clone()));
        test.extend(group[cut..].iter().map(|t| (*t).clone()));
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::Validation("empty train or test split".into()));
    }

    let train = filter_top_proxy(&train, filter_fraction);
    let s_set: Vec<u32> = match tuples.first() {
        Some(t) => t.per_n.keys().cloned().collect(),
        None => return Err(Error::Validation("no tuples to validate".into())),
    };

    let mut entries = Vec::with_capacity(s_set.len());
    let mut bound = 0.0;
    for (i, &n) in s_set.iter().enumerate() {
        let (grid, curves) = fit_kde(&train, n, beta, sampling, &BandwidthOverrides::default())?;
        let p_min = grid.p_edges[0];
        let p_max = *grid.p_edges.last().unwrap();
        let width = (p_max - p_min) / GRID_BINS as f64;
        let mut successes = 0usize;
        for tuple in &test {
            let per = tuple.per_n.get(&n).ok_or_else(|| {
                Error::Validation(format!(
                    "test tuple (episode {}) is missing perturbation size {n}",
                    tuple.episode_id
                ))
            })?;
            // Nearest bin, clamped at both ends of the training range.
            let bin = if tuple.proxy <= p_min {
                0
            } else {
                (((tuple.proxy - p_min) / width) as usize).min(GRID_BINS - 1)
            };
            if per.c_star <= curves.percentile_curve[bin] {
                successes += 1;
            }
        }
        let rate = successes as f64 / test.len() as f64;
        entries.push(CoverageEntry {
            n,
            success_rate: rate,
            estimated_epsilon_percentile: beta.value() - rate,
            test_count: test.len(),
        });
        if i == 0 {
            // d does not depend on n; reuse the first fit's geometry.
            let m_uniform = train
                .iter()
                .filter(|t| t.mode == SampleMode::Uniform)
                .count()
                .max(1);
            let d = crate::stats::effective_sample_size(
                m_uniform,
                grid.h_p,
                p_max - p_min,
                crate::stats::Kernel::Gaussian,
                true,
            )?;
            bound = crate::stats::percentile_error_bound(d, beta, sampling.alpha).tighter;
        }
    }

    Ok(CoverageReport {
        beta,
        train_count: train.len(),
        test_count: test.len(),
        percentile_bound: bound,
        entries,
    })
}

/// Renders a coverage report in the layout of a validation table:
/// environment, policy, n, estimated percentile error.
pub fn coverage_table_text(env: &str, policy: &str, report: &CoverageReport) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<16} {:<10} {:>4} {:>12} {:>24}",
        "environment", "policy", "n", "success rate", "estimated eps_percentile"
    )
    .expect("string write");
    for e in &report.entries {
        writeln!(
            out,
            "{:<16} {:<10} {:>4} {:>12.4} {:>24.4}",
            env, policy, e.n, e.success_rate, e.estimated_epsilon_percentile
        )
        .expect("string write");
    }
    writeln!(
        out,
        "train {} / test {} tuples; theoretical bound {:.4}",
        report.train_count, report.test_count, report.percentile_bound
    )
    .expect("string write");
    out
}

// ---------------------------------------------------------------------------
// Failure proximity
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProximityEntry {
    pub zeta: f64,
    /// Steps before the failing transition: the failure registers at the
    /// transition taken at step f, and offset o reads the margin at step
    /// f - o.
    pub offset: u32,
    pub mean_margin: f64,
    pub stdev_margin: f64,
    pub count: usize,
    /// Failures whose episode was too short for this offset.
    pub skipped: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProximityAverage {
    pub zeta: f64,
    pub mean: f64,
    pub stdev: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProximityReport {
    pub episodes: u32,
    pub failures: usize,
    pub empty_failures: bool,
    pub per_offset: Vec<ProximityEntry>,
    /// Per-episode average margin, aggregated across all episodes.
    pub per_zeta_average: Vec<ProximityAverage>,
    pub top_fraction: f64,
    /// Fraction of failures whose final proxy reading (at the failing
    /// decision) ranks in the top `top_fraction` of all proxies recorded
    /// across these episodes.
    pub top_fraction_before_failure: f64,
}

fn mean_stdev(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (mean, (ss / (values.len() - 1) as f64).sqrt())
}

/// Runs seeded episodes, finds the failures, and compares margins shortly
/// before each failure against the per-episode average margin.
#[allow(clippy::too_many_arguments)]
pub fn failure_proximity(
    spec: &EnvSpec,
    policy: &dyn Policy,
    table: &MarginTable,
    episodes: u32,
    zetas: &[f64],
    offsets: &[u32],
    top_fraction: f64,
    seed: u64,
) -> Result<ProximityReport> {
    if zetas.is_empty() || offsets.is_empty() {
        return Err(Error::InvalidArgument(
            "failure proximity needs at least one zeta and one offset".into(),
        ));
    }
    let traces: Vec<_> = (0..episodes)
        .into_par_iter()
        .map(|i| {
            run_episode(
                spec,
                policy,
                seeds::mix(&[seeds::STREAM_PROXIMITY, seed, u64::from(i)]),
            )
        })
        .collect::<Result<_>>()?;

    let mut all_proxies: Vec<f64> = Vec::new();
    for trace in &traces {
        all_proxies.extend(trace.steps.iter().map(|s| s.proxy));
    }

    let failures: Vec<_> = traces.iter().filter(|t| t.failure && !t.is_empty()).collect();
    let empty_failures = failures.is_empty();

    let mut per_offset = Vec::new();
    let mut per_zeta_average = Vec::new();
    for &zeta in zetas {
        for &offset in offsets {
            let mut margins = Vec::new();
            let mut skipped = 0usize;
            for trace in &failures {
                let fail_step = trace.len() - 1;
                let Some(step) = fail_step.checked_sub(offset as usize) else {
                    skipped += 1;
                    continue;
                };
                margins.push(f64::from(
                    table.query_margin(trace.steps[step].proxy, zeta),
                ));
            }
            let (mean, stdev) = mean_stdev(&margins);
            per_offset.push(ProximityEntry {
                zeta,
                offset,
                mean_margin: mean,
                stdev_margin: stdev,
                count: margins.len(),
                skipped,
            });
        }

        let episode_means: Vec<f64> = traces
            .iter()
            .filter(|t| !t.is_empty())
            .map(|trace| {
                let sum: f64 = trace
                    .steps
                    .iter()
                    .map(|s| f64::from(table.query_margin(s.proxy, zeta)))
                    .sum();
                sum / trace.len() as f64
            })
            .collect();
        let (mean, stdev) = mean_stdev(&episode_means);
        per_zeta_average.push(ProximityAverage { zeta, mean, stdev });
    }

    // Top-proxy threshold over everything recorded in this run.
    let top_fraction_before_failure = if empty_failures || all_proxies.is_empty() {
        0.0
    } else {
        let mut sorted = all_proxies.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let k = ((top_fraction * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
        let threshold = sorted[sorted.len() - k];
        let hits = failures
            .iter()
            .filter(|t| t.steps[t.len() - 1].proxy >= threshold)
            .count();
        hits as f64 / failures.len() as f64
    };

    Ok(ProximityReport {
        episodes,
        failures: failures.len(),
        empty_failures,
        per_offset,
        per_zeta_average,
        top_fraction,
        top_fraction_before_failure,
    })
}

pub fn proximity_table_text(report: &ProximityReport) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "episodes {} failures {}{}",
        report.episodes,
        report.failures,
        if report.empty_failures {
            " (no failures observed)"
        } else {
            ""
        }
    )
    .expect("string write");
    writeln!(
        out,
        "{:>8} {:>20} {:>18}",
        "zeta", "steps before death", "safety margin"
    )
    .expect("string write");
    for e in &report.per_offset {
        writeln!(
            out,
            "{:>8.3} {:>20} {:>11.2} +- {:.2}",
            e.zeta, e.offset, e.mean_margin, e.stdev_margin
        )
        .expect("string write");
    }
    for avg in &report.per_zeta_average {
        writeln!(
            out,
            "{:>8.3} {:>20} {:>11.2} +- {:.2}",
            avg.zeta, "average", avg.mean, avg.stdev
        )
        .expect("string write");
    }
    writeln!(
        out,
        "fraction of failures in top {:.0}% proxies: {:.2}",
        report.top_fraction * 100.0,
        report.top_fraction_before_failure
    )
    .expect("string write");
    out
}

// ---------------------------------------------------------------------------
// Gap error
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapSample {
    pub proxy: f64,
    pub sparse_margin: u32,
    pub dense_margin: u32,
    /// `sparse_margin - dense_margin`; non-positive whenever the percentile
    /// family is monotone in n.
    pub gap: i64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapErrorReport {
    pub zeta: f64,
    pub sparse_s: Vec<u32>,
    pub dense_s: Vec<u32>,
    pub samples: Vec<GapSample>,
    pub min_gap: i64,
    pub max_gap: i64,
    pub mean_gap: f64,
}

/// Measures the margin discrepancy between a sparse perturbation-size set
/// and a denser reference. One data set is collected with criticalities for
/// every size in `dense_s`; both margin pipelines are then fit on the same
/// tuples and queried at evenly spaced proxy values.
///
/// `collection.s_set` is ignored and replaced by `dense_s`.
#[allow(clippy::too_many_arguments)]
pub fn gap_error_measure(
    spec: &EnvSpec,
    policy: &dyn Policy,
    sparse_s: &[u32],
    dense_s: &[u32],
    sample_points: usize,
    zeta: f64,
    collection: &CollectionConfig,
    beta: Confidence,
    filter_fraction: f64,
) -> Result<GapErrorReport> {
    let mut config = collection.clone();
    config.s_set = dense_s.to_vec();
    config.validate()?;
    let (tuples, _) = collect_tuples(spec, policy, &config)?;
    gap_error_from_tuples(
        &tuples,
        sparse_s,
        dense_s,
        sample_points,
        zeta,
        &config.sampling,
        beta,
        filter_fraction,
    )
}

/// The analysis half of the gap-error measurement: fits the sparse and
/// dense margin pipelines on the same tuples (which must carry every size
/// in `dense_s`) and compares margins at evenly spaced proxies.
#[allow(clippy::too_many_arguments)]
pub fn gap_error_from_tuples(
    tuples: &[DataTuple],
    sparse_s: &[u32],
    dense_s: &[u32],
    sample_points: usize,
    zeta: f64,
    sampling: &SamplingConfig,
    beta: Confidence,
    filter_fraction: f64,
) -> Result<GapErrorReport> {
    if sample_points < 10 {
        return Err(Error::InvalidArgument(format!(
            "need at least 10 sample points, got {sample_points}"
        )));
    }
    for n in sparse_s {
        if !dense_s.contains(n) {
            return Err(Error::InvalidArgument(format!(
                "sparse set member {n} is missing from the dense set"
            )));
        }
    }
    let tuples = filter_top_proxy(tuples, filter_fraction);

    let fit_set = |s: &[u32]| -> Result<MarginTable> {
        let fits = s
            .iter()
            .map(|&n| fit_kde(&tuples, n, beta, sampling, &BandwidthOverrides::default()))
            .collect::<Result<Vec<_>>>()?;
        build_margin_table(&fits, s, "gap-error")
    };
    let sparse_table = fit_set(sparse_s)?;
    let dense_table = fit_set(dense_s)?;

    let p_min = dense_table.p_min();
    let p_max = dense_table.p_max();
    let samples: Vec<GapSample> = (0..sample_points)
        .map(|i| {
            let proxy = p_min + (p_max - p_min) * i as f64 / (sample_points - 1) as f64;
            let sparse_margin = sparse_table.query_margin(proxy, zeta);
            let dense_margin = dense_table.query_margin(proxy, zeta);
            GapSample {
                proxy,
                sparse_margin,
                dense_margin,
                gap: i64::from(sparse_margin) - i64::from(dense_margin),
            }
        })
        .collect();

    let min_gap = samples.iter().map(|s| s.gap).min().unwrap();
    let max_gap = samples.iter().map(|s| s.gap).max().unwrap();
    let mean_gap = samples.iter().map(|s| s.gap as f64).sum::<f64>() / samples.len() as f64;
    Ok(GapErrorReport {
        zeta,
        sparse_s: sparse_s.to_vec(),
        dense_s: dense_s.to_vec(),
        samples,
        min_gap,
        max_gap,
        mean_gap,
    })
}

pub fn error_table_text(env: &str, policy: &str, report: &crate::margins::MarginErrorReport) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<16} {:<10} {:>4} {:>8} {:>10} {:>8} {:>26}",
        "environment", "policy", "n", "h_p", "m_uniform", "d", "estimated eps bound"
    )
    .expect("string write");
    for e in &report.entries {
        writeln!(
            out,
            "{:<16} {:<10} {:>4} {:>8.4} {:>10} {:>8.2} {:>26.4}{}",
            env,
            policy,
            e.n,
            e.h_p,
            e.m_uniform,
            e.d_estimate,
            e.epsilon_percentile_bound,
            if e.normal_approx_warning {
                "  (low-sample warning)"
            } else {
                ""
            }
        )
        .expect("string write");
    }
    out
}
