//! From data tuples to safety-margin lookup tables: top-proxy filtering,
//! 2d kernel density estimation over (proxy, criticality), per-column
//! percentile curves, monotonic adjustment, and margin queries.

pub mod export;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::collect::{DataTuple, SampleMode};
use crate::criticality::SamplingConfig;
use crate::error::{Error, Result};
use crate::stats::{
    effective_sample_size, percentile_error_bound, sample_stdev_bessel, scott_bandwidth,
    t_quantile_two_sided, Confidence, Kernel,
};

/// Grid resolution per axis.
pub const GRID_BINS: usize = 200;

/// Degrees of freedom standing in for the large-sample Student t limit.
const LARGE_DOF: u64 = 1_000_000;

/// Kernels are cut off this many bandwidths from their center; the mass
/// beyond is below the column-normalization tolerance.
const KERNEL_CUTOFF_SIGMAS: f64 = 6.0;

const TABLE_FILE_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// Filtering
// ---------------------------------------------------------------------------

/// Removes the `ceil(fraction * count)` tuples with the largest proxy
/// values. Ties are ordered by (episode_id, t) so the cut is deterministic;
/// survivors keep their original order.
pub fn filter_top_proxy(tuples: &[DataTuple], fraction: f64) -> Vec<DataTuple> {
    assert!(
        (0.0..1.0).contains(&fraction),
        "filter fraction must lie in [0, 1)"
    );
    let remove = (fraction * tuples.len() as f64).ceil() as usize;
    if remove == 0 {
        return tuples.to_vec();
    }
    let mut order: Vec<usize> = (0..tuples.len()).collect();
    order.sort_by(|&a, &b| {
        let ta = &tuples[a];
        let tb = &tuples[b];
        ta.proxy
            .partial_cmp(&tb.proxy)
            .unwrap()
            .then(ta.episode_id.cmp(&tb.episode_id))
            .then(ta.t.cmp(&tb.t))
    });
    let removed: std::collections::HashSet<usize> =
        order[tuples.len() - remove..].iter().cloned().collect();
    tuples
        .iter()
        .enumerate()
        .filter(|(i, _)| !removed.contains(i))
        .map(|(_, t)| t.clone())
        .collect()
}

// ---------------------------------------------------------------------------
// KDE grid and curves
// ---------------------------------------------------------------------------

/// Column-normalized 2d density over (proxy, criticality).
#[derive(Debug, Clone, PartialEq)]
pub struct KdeGrid {
    /// 201 ascending proxy bin edges spanning the data range.
    pub p_edges: Vec<f64>,
    /// 201 ascending criticality bin edges, padded by 3 vertical bandwidths
    /// beyond the data range on each side.
    pub c_edges: Vec<f64>,
    pub h_p: f64,
    pub h_c: f64,
    /// `density[p_bin][c_bin]`; every column sums to 1.
    pub density: Vec<Vec<f64>>,
}

impl KdeGrid {
    pub fn p_centers(&self) -> Vec<f64> {
        centers(&self.p_edges)
    }

    pub fn c_centers(&self) -> Vec<f64> {
        centers(&self.c_edges)
    }
}

/// Mean, median, and upper-percentile criticality per proxy column.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSet {
    pub n: u32,
    pub beta: Confidence,
    pub mean_curve: Vec<f64>,
    pub median_curve: Vec<f64>,
    pub percentile_curve: Vec<f64>,
}

/// Manual bandwidth replacements; an overridden axis skips the Scott rule,
/// the sampling-error floor, and the unconverged-estimate inflation.
#[derive(Debug, Clone, Copy, Default)]
pub struct BandwidthOverrides {
    pub h_p: Option<f64>,
    pub h_c: Option<f64>,
}

fn centers(edges: &[f64]) -> Vec<f64> {
    edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let step = (hi - lo) / (points - 1) as f64;
    (0..points).map(|i| lo + step * i as f64).collect()
}

/// Gaussian weights of one kernel over the bin centers, cut off at
/// [`KERNEL_CUTOFF_SIGMAS`]. A kernel narrower than the bin spacing snaps
/// to its nearest bin so no data point can vanish from the grid.
fn kernel_weights(centers: &[f64], at: f64, bandwidth: f64) -> Vec<f64> {
    let mut w = vec![0.0; centers.len()];
    let mut any = false;
    for (i, &x) in centers.iter().enumerate() {
        let d = (x - at) / bandwidth;
        if d.abs() <= KERNEL_CUTOFF_SIGMAS {
            w[i] = (-0.5 * d * d).exp();
            any = true;
        }
    }
    if !any {
        let nearest = centers
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                (*a - at).abs().partial_cmp(&(*b - at).abs()).unwrap()
            })
            .map(|(i, _)| i)
            .unwrap();
        w[nearest] = 1.0;
    }
    w
}

/// Fits the column-normalized KDE for perturbation size `n` and extracts
/// its trend curves.
///
/// Bandwidths follow the Scott rule on each axis; the vertical bandwidth is
/// floored at `eps_sampling / t_alpha` so criticality-estimation noise is
/// absorbed, and raised further to the largest half-width among unconverged
/// estimates when the trial cap was hit.
pub fn fit_kde(
    tuples: &[DataTuple],
    n: u32,
    beta: Confidence,
    sampling: &SamplingConfig,
    overrides: &BandwidthOverrides,
) -> Result<(KdeGrid, CurveSet)> {
    if tuples.len() < 10 {
        return Err(Error::Fit(format!(
            "need at least 10 tuples to fit a density, got {}; collect more data",
            tuples.len()
        )));
    }
    let mut proxies = Vec::with_capacity(tuples.len());
    let mut crits = Vec::with_capacity(tuples.len());
    let mut unconverged_half_width: f64 = 0.0;
    for tuple in tuples {
        let per = tuple.per_n.get(&n).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "tuple (episode {}, t {}) is missing perturbation size {n}",
                tuple.episode_id, tuple.t
            ))
        })?;
        proxies.push(tuple.proxy);
        crits.push(per.c_star);
        if !per.converged && per.trials >= 2 {
            let t = t_quantile_two_sided(sampling.alpha, u64::from(per.trials - 1))?;
            let hw = t * per.stdev / f64::from(per.trials).sqrt();
            unconverged_half_width = unconverged_half_width.max(hw);
        }
    }
    let m = tuples.len();

    let p_min = proxies.iter().cloned().fold(f64::INFINITY, f64::min);
    let p_max = proxies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if p_max.is_nan() || p_min.is_nan() || p_max <= p_min {
        return Err(Error::Fit(
            "proxy axis is degenerate (all proxies equal); collect more varied data".into(),
        ));
    }

    let h_p = match overrides.h_p {
        Some(h) => h,
        None => scott_bandwidth(sample_stdev_bessel(&proxies)?, m),
    };
    let h_c = match overrides.h_c {
        Some(h) => h,
        None => {
            let t_large = t_quantile_two_sided(sampling.alpha, LARGE_DOF)?;
            let floor = sampling.eps_sampling_target / t_large;
            scott_bandwidth(sample_stdev_bessel(&crits)?, m)
                .max(floor)
                .max(unconverged_half_width)
        }
    };
    if h_p.is_nan() || h_c.is_nan() || h_p <= 0.0 || h_c <= 0.0 {
        return Err(Error::Fit(format!(
            "bandwidths must be positive (h_p = {h_p}, h_c = {h_c})"
        )));
    }

    let c_min = crits.iter().cloned().fold(f64::INFINITY, f64::min);
    let c_max = crits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let p_edges = linspace(p_min, p_max, GRID_BINS + 1);
    let c_edges = linspace(c_min - 3.0 * h_c, c_max + 3.0 * h_c, GRID_BINS + 1);
    let p_centers = centers(&p_edges);
    let c_centers = centers(&c_edges);

    let mut density = vec![vec![0.0f64; GRID_BINS]; GRID_BINS];
    let mut row_weights = Vec::with_capacity(m);
    for (&p, &c) in proxies.iter().zip(&crits) {
        let wp = kernel_weights(&p_centers, p, h_p);
        let wc = kernel_weights(&c_centers, c, h_c);
        for (j, &wpj) in wp.iter().enumerate() {
            if wpj == 0.0 {
                continue;
            }
            let col = &mut density[j];
            for (k, &wck) in wc.iter().enumerate() {
                col[k] += wpj * wck;
            }
        }
        row_weights.push(wc);
    }

    // Columns farther than the kernel cutoff from every data point fall
    // back to the nearest tuple's vertical profile.
    for (j, col) in density.iter_mut().enumerate() {
        let total: f64 = col.iter().sum();
        if total > 0.0 {
            for v in col.iter_mut() {
                *v /= total;
            }
            continue;
        }
        let x = p_centers[j];
        let nearest = proxies
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| (*a - x).abs().partial_cmp(&(*b - x).abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let wc = &row_weights[nearest];
        let sum: f64 = wc.iter().sum();
        for (v, &w) in col.iter_mut().zip(wc) {
            *v = w / sum;
        }
    }

    let mut mean_curve = Vec::with_capacity(GRID_BINS);
    let mut median_curve = Vec::with_capacity(GRID_BINS);
    let mut percentile_curve = Vec::with_capacity(GRID_BINS);
    for col in &density {
        let mean: f64 = col.iter().zip(&c_centers).map(|(d, c)| d * c).sum();
        mean_curve.push(mean);
        median_curve.push(column_quantile(col, &c_centers, 0.5));
        percentile_curve.push(column_quantile(col, &c_centers, beta.value()));
    }

    Ok((
        KdeGrid {
            p_edges,
            c_edges,
            h_p,
            h_c,
            density,
        },
        CurveSet {
            n,
            beta,
            mean_curve,
            median_curve,
            percentile_curve,
        },
    ))
}

/// Smallest bin center whose cumulative column mass reaches `q`.
fn column_quantile(column: &[f64], c_centers: &[f64], q: f64) -> f64 {
    let mut cum = 0.0;
    for (d, &c) in column.iter().zip(c_centers) {
        cum += d;
        if cum >= q - 1e-12 {
            return c;
        }
    }
    *c_centers.last().unwrap()
}

/// Running-maximum scan: lifts every dip in the curve to the highest value
/// seen so far. Idempotent and never decreases an entry.
pub fn enforce_monotone(curve: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(curve.len());
    let mut best = f64::NEG_INFINITY;
    for &v in curve {
        best = best.max(v);
        out.push(best);
    }
    out
}

// ---------------------------------------------------------------------------
// Margin table
// ---------------------------------------------------------------------------

/// Safety-margin lookup table: monotone-adjusted percentile curves per
/// perturbation size over a shared proxy binning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginTable {
    pub version: u32,
    pub beta: Confidence,
    pub s_set: Vec<u32>,
    pub p_edges: Vec<f64>,
    /// Horizontal bandwidth of the underlying fits (shared by all sizes);
    /// kept for error-bound reporting.
    pub h_p: f64,
    /// Non-decreasing adjusted percentile curve per perturbation size.
    pub adjusted_curves: BTreeMap<u32, Vec<f64>>,
    /// Digest of the configuration that produced the table.
    pub provenance: String,
}

/// Compiles fitted curve sets into a margin table, applying the monotone
/// adjustment. Every size in `s_set` must be covered, over identical
/// proxy edges.
pub fn build_margin_table(
    fits: &[(KdeGrid, CurveSet)],
    s_set: &[u32],
    provenance: &str,
) -> Result<MarginTable> {
    if fits.is_empty() {
        return Err(Error::Table("no fitted curves supplied".into()));
    }
    let first_grid = &fits[0].0;
    let mut adjusted = BTreeMap::new();
    let mut beta = None;
    for (grid, curves) in fits {
        if grid.p_edges != first_grid.p_edges {
            return Err(Error::Table(format!(
                "proxy edges for n = {} do not match the other fits",
                curves.n
            )));
        }
        if let Some(b) = beta {
            if b != curves.beta {
                return Err(Error::Table("mismatched beta across curve sets".into()));
            }
        }
        beta = Some(curves.beta);
        adjusted.insert(curves.n, enforce_monotone(&curves.percentile_curve));
    }
    for n in s_set {
        if !adjusted.contains_key(n) {
            return Err(Error::Table(format!(
                "perturbation size {n} has no fitted curve"
            )));
        }
    }
    Ok(MarginTable {
        version: TABLE_FILE_VERSION,
        beta: beta.unwrap(),
        s_set: s_set.to_vec(),
        p_edges: first_grid.p_edges.clone(),
        h_p: first_grid.h_p,
        adjusted_curves: adjusted,
        provenance: provenance.to_string(),
    })
}

impl MarginTable {
    pub fn p_min(&self) -> f64 {
        self.p_edges[0]
    }

    pub fn p_max(&self) -> f64 {
        *self.p_edges.last().unwrap()
    }

    pub fn p_centers(&self) -> Vec<f64> {
        centers(&self.p_edges)
    }

    /// Bin holding `proxy`, or `None` above the table range. Proxies above
    /// the range were filtered out of the fit as rare and noisy, so they
    /// conservatively map to a zero margin; below the range clamps to the
    /// first (data-dense) bin.
    fn bin_index(&self, proxy: f64) -> Option<usize> {
        let p_min = self.p_min();
        let p_max = self.p_max();
        if proxy > p_max {
            return None;
        }
        if proxy <= p_min {
            return Some(0);
        }
        let width = (p_max - p_min) / GRID_BINS as f64;
        Some((((proxy - p_min) / width) as usize).min(GRID_BINS - 1))
    }

    /// Largest margin n in the configured set such that the adjusted
    /// percentile curves at this proxy stay within `zeta` for *every*
    /// size up to n; 0 as soon as the first size fails.
    pub fn query_margin(&self, proxy: f64, zeta: f64) -> u32 {
        let Some(bin) = self.bin_index(proxy) else {
            return 0;
        };
        let mut margin = 0;
        for &n in &self.s_set {
            if self.adjusted_curves[&n][bin] <= zeta {
                margin = n;
            } else {
                break;
            }
        }
        margin
    }

    /// The tolerance axis used for heatmap exports: 100 uniform values from
    /// 0 to the largest adjusted percentile.
    pub fn zeta_axis(&self) -> Vec<f64> {
        let max = self
            .adjusted_curves
            .values()
            .flat_map(|c| c.iter().cloned())
            .fold(f64::NEG_INFINITY, f64::max)
            .max(1e-9);
        linspace(0.0, max, 100)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Table(format!("serializing margin table: {e}")))?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let table: MarginTable = serde_json::from_str(&text)
            .map_err(|e| Error::Table(format!("parsing {}: {e}", path.display())))?;
        if table.version != TABLE_FILE_VERSION {
            return Err(Error::Table(format!(
                "unsupported margin table version {}",
                table.version
            )));
        }
        Ok(table)
    }
}

// ---------------------------------------------------------------------------
// Error-bound report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginErrorEntry {
    pub n: u32,
    pub h_p: f64,
    pub m_uniform: usize,
    pub d_estimate: f64,
    pub epsilon_percentile_bound: f64,
    pub normal_approx_warning: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginErrorReport {
    pub alpha: Confidence,
    pub beta: Confidence,
    /// Set when no uniform-mode tuples were available and all modes were
    /// used for the count instead.
    pub used_all_modes_fallback: bool,
    pub entries: Vec<MarginErrorEntry>,
}

/// Effective-sample-size and percentile-error-bound report for a fitted
/// table. The conservative recipe counts only uniform-mode tuples (the
/// natural mode clusters at low proxies) and halves the kernel count for
/// boundary effects. The proxy metric does not depend on n, so every entry
/// shares one d.
pub fn margin_error_report(
    table: &MarginTable,
    tuples: &[DataTuple],
    alpha: Confidence,
) -> Result<MarginErrorReport> {
    let m_uniform = tuples
        .iter()
        .filter(|t| t.mode == SampleMode::Uniform)
        .count();
    let (m, fallback) = if m_uniform > 0 {
        (m_uniform, false)
    } else {
        (tuples.len(), true)
    };
    if m == 0 {
        return Err(Error::Validation(
            "cannot build an error report from zero tuples".into(),
        ));
    }
    let range = table.p_max() - table.p_min();
    let d = effective_sample_size(m, table.h_p, range, Kernel::Gaussian, true)?;
    let bound = percentile_error_bound(d, table.beta, alpha);
    let entries = table
        .s_set
        .iter()
        .map(|&n| MarginErrorEntry {
            n,
            h_p: table.h_p,
            m_uniform: m,
            d_estimate: d.value(),
            epsilon_percentile_bound: bound.tighter,
            normal_approx_warning: bound.normal_approx_warning,
        })
        .collect();
    Ok(MarginErrorReport {
        alpha,
        beta: table.beta,
        used_all_modes_fallback: fallback,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::z_quantile_one_sided;
    use approx::assert_abs_diff_eq;
    use std::collections::BTreeMap;

    fn conf(v: f64) -> Confidence {
        Confidence::new(v).unwrap()
    }

    fn sampling() -> SamplingConfig {
        SamplingConfig::new(0.2, conf(0.95), 10, 1000).unwrap()
    }

    fn tuple(id: u64, proxy: f64, c: f64, n_keys: &[u32]) -> DataTuple {
        let mut per_n = BTreeMap::new();
        for &n in n_keys {
            per_n.insert(
                n,
                crate::collect::PerNStats {
                    c_star: c,
                    trials: 20,
                    stdev: 0.0,
                    converged: true,
                },
            );
        }
        DataTuple {
            episode_id: id,
            t: 0,
            mode: if id.is_multiple_of(2) {
                SampleMode::Natural
            } else {
                SampleMode::Uniform
            },
            proxy,
            per_n,
        }
    }

    #[test]
    fn filter_removes_largest_proxies() {
        let tuples: Vec<DataTuple> =
            (0..100).map(|i| tuple(i, i as f64, 0.0, &[1])).collect();
        let kept = filter_top_proxy(&tuples, 0.05);
        assert_eq!(kept.len(), 95);
        assert!(kept.iter().all(|t| t.proxy < 95.0));
        // Original order preserved.
        let ids: Vec<u64> = kept.iter().map(|t| t.episode_id).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);

        assert_eq!(filter_top_proxy(&tuples, 0.0).len(), 100);
    }

    #[test]
    fn filter_breaks_ties_deterministically() {
        let tuples: Vec<DataTuple> = (0..20).map(|i| tuple(i, 1.0, 0.0, &[1])).collect();
        let kept = filter_top_proxy(&tuples, 0.05);
        assert_eq!(kept.len(), 19);
        // The largest (episode_id, t) among equal proxies goes first.
        assert!(kept.iter().all(|t| t.episode_id != 19));
        let again = filter_top_proxy(&tuples, 0.05);
        assert_eq!(kept, again);
    }

    #[test]
    fn monotone_adjustment_cases() {
        assert_eq!(enforce_monotone(&[1.0, 0.5, 2.0]), vec![1.0, 1.0, 2.0]);
        assert_eq!(enforce_monotone(&[3.0, 2.0, 1.0]), vec![3.0, 3.0, 3.0]);
        let already = vec![0.1, 0.2, 0.2, 0.9];
        assert_eq!(enforce_monotone(&already), already);
        // Idempotent and never decreasing.
        let messy = vec![0.3, -1.0, 0.2, 0.25, 5.0, 4.0];
        let once = enforce_monotone(&messy);
        assert_eq!(enforce_monotone(&once), once);
        for (a, b) in messy.iter().zip(&once) {
            assert!(b >= a);
        }
    }

    #[test]
    fn kde_columns_normalize_and_point_mass_stays_tight() {
        // Criticality identically zero: each column is the discretized
        // Gaussian smear of a point mass, so the upper percentile sits at
        // about z_beta vertical bandwidths above zero.
        let tuples: Vec<DataTuple> = (0..50)
            .map(|i| tuple(i, i as f64 / 49.0, 0.0, &[1]))
            .collect();
        let (grid, curves) =
            fit_kde(&tuples, 1, conf(0.95), &sampling(), &BandwidthOverrides::default()).unwrap();
        for col in &grid.density {
            assert_abs_diff_eq!(col.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        }
        let bin_w = grid.c_edges[1] - grid.c_edges[0];
        let z = z_quantile_one_sided(conf(0.95));
        for &p in &curves.percentile_curve {
            assert!(
                p.abs() <= z * grid.h_c + 2.0 * bin_w,
                "percentile {p} vs smear bound {}",
                z * grid.h_c + 2.0 * bin_w
            );
        }
        for (&m, &p) in curves.median_curve.iter().zip(&curves.percentile_curve) {
            assert!(p >= m);
        }
    }

    #[test]
    fn kde_tracks_an_identity_ridge_with_tiny_bandwidths() {
        let m = 500;
        let tuples: Vec<DataTuple> = (0..m)
            .map(|i| {
                let p = i as f64 / (m - 1) as f64;
                tuple(i as u64, p, p, &[1])
            })
            .collect();
        let overrides = BandwidthOverrides {
            h_p: Some(1e-4),
            h_c: Some(1e-4),
        };
        let (grid, curves) = fit_kde(&tuples, 1, conf(0.95), &sampling(), &overrides).unwrap();
        let bin_w = grid.c_edges[1] - grid.c_edges[0];
        for (x, p) in grid.p_centers().iter().zip(&curves.percentile_curve) {
            assert!(
                (p - x).abs() <= 2.0 * bin_w,
                "percentile {p} far from ridge at {x}"
            );
        }
    }

    #[test]
    fn fit_rejects_degenerate_and_undersized_inputs() {
        let few: Vec<DataTuple> = (0..5).map(|i| tuple(i, i as f64, 0.0, &[1])).collect();
        assert!(matches!(
            fit_kde(&few, 1, conf(0.95), &sampling(), &BandwidthOverrides::default()),
            Err(Error::Fit(_))
        ));

        let flat: Vec<DataTuple> = (0..20).map(|i| tuple(i, 1.0, 0.0, &[1])).collect();
        assert!(matches!(
            fit_kde(&flat, 1, conf(0.95), &sampling(), &BandwidthOverrides::default()),
            Err(Error::Fit(_))
        ));

        let ok: Vec<DataTuple> = (0..20).map(|i| tuple(i, i as f64, 0.0, &[1])).collect();
        assert!(matches!(
            fit_kde(&ok, 2, conf(0.95), &sampling(), &BandwidthOverrides::default()),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn vertical_floor_absorbs_estimation_noise() {
        let tuples: Vec<DataTuple> = (0..50)
            .map(|i| tuple(i, i as f64 / 49.0, 0.0, &[1]))
            .collect();
        let (grid, _) =
            fit_kde(&tuples, 1, conf(0.95), &sampling(), &BandwidthOverrides::default()).unwrap();
        let t_large = t_quantile_two_sided(conf(0.95), 1_000_000).unwrap();
        assert_abs_diff_eq!(grid.h_c, 0.2 / t_large, epsilon = 1e-12);
    }

    #[test]
    fn unconverged_estimates_inflate_the_vertical_bandwidth() {
        let mut tuples: Vec<DataTuple> = (0..50)
            .map(|i| tuple(i, i as f64 / 49.0, 0.0, &[1]))
            .collect();
        // One capped estimate whose half-width dwarfs the floor.
        let per = tuples[10].per_n.get_mut(&1).unwrap();
        per.converged = false;
        per.trials = 100;
        per.stdev = 10.0;
        let (grid, _) =
            fit_kde(&tuples, 1, conf(0.95), &sampling(), &BandwidthOverrides::default()).unwrap();
        let t = t_quantile_two_sided(conf(0.95), 99).unwrap();
        assert_abs_diff_eq!(grid.h_c, t * 10.0 / 100f64.sqrt(), epsilon = 1e-12);
    }

    fn constant_curve_table(curves: &[(u32, f64)], beta: f64) -> MarginTable {
        let p_edges = linspace(0.0, 1.0, GRID_BINS + 1);
        let mut adjusted = BTreeMap::new();
        for &(n, level) in curves {
            adjusted.insert(n, vec![level; GRID_BINS]);
        }
        MarginTable {
            version: TABLE_FILE_VERSION,
            beta: conf(beta),
            s_set: curves.iter().map(|&(n, _)| n).collect(),
            p_edges,
            h_p: 0.1,
            adjusted_curves: adjusted,
            provenance: "test".into(),
        }
    }

    #[test]
    fn mismatched_proxy_edges_are_rejected() {
        let sampling = sampling();
        let a: Vec<DataTuple> = (0..20).map(|i| tuple(i, i as f64, 0.0, &[1])).collect();
        let b: Vec<DataTuple> = (0..20).map(|i| tuple(i, 2.0 * i as f64, 0.0, &[2])).collect();
        let fit_a = fit_kde(&a, 1, conf(0.95), &sampling, &BandwidthOverrides::default()).unwrap();
        let fit_b = fit_kde(&b, 2, conf(0.95), &sampling, &BandwidthOverrides::default()).unwrap();
        assert!(matches!(
            build_margin_table(&[fit_a, fit_b], &[1, 2], "t"),
            Err(Error::Table(_))
        ));
    }

    #[test]
    fn prefix_rule_hand_cases() {
        let table = constant_curve_table(&[(1, 0.1), (2, 0.3)], 0.95);
        for proxy in [0.0, 0.37, 0.99] {
            assert_eq!(table.query_margin(proxy, 0.2), 1);
            assert_eq!(table.query_margin(proxy, 0.05), 0);
            assert_eq!(table.query_margin(proxy, 1e9), 2);
        }

        // Non-monotone family: the failing middle size truncates the margin.
        let table = constant_curve_table(&[(1, 0.1), (2, 0.5), (4, 0.2)], 0.95);
        assert_eq!(table.query_margin(0.5, 0.3), 1);
    }

    #[test]
    fn out_of_range_proxies() {
        let table = constant_curve_table(&[(1, 0.1), (2, 0.3)], 0.95);
        assert_eq!(table.query_margin(1.5, 1e9), 0, "above range is conservative");
        assert_eq!(table.query_margin(-0.5, 0.2), 1, "below range clamps");
    }

    #[test]
    fn query_margin_is_monotone_in_zeta() {
        let table = constant_curve_table(&[(1, 0.1), (2, 0.3), (4, 0.7)], 0.95);
        let mut prev = 0;
        for i in 0..100 {
            let zeta = i as f64 / 99.0;
            let m = table.query_margin(0.4, zeta);
            assert!(m >= prev);
            prev = m;
        }
    }

    #[test]
    fn table_file_round_trip_preserves_queries() {
        let mut table = constant_curve_table(&[(1, 0.1), (2, 0.3), (4, 0.7)], 0.95);
        // Give the curves some shape.
        for curve in table.adjusted_curves.values_mut() {
            for (j, v) in curve.iter_mut().enumerate() {
                *v += j as f64 * 0.001;
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.json");
        table.save(&path).unwrap();
        let loaded = MarginTable::load(&path).unwrap();
        for j in 0..GRID_BINS {
            let proxy = table.p_centers()[j];
            for zi in 0..100 {
                let zeta = zi as f64 / 99.0;
                assert_eq!(
                    table.query_margin(proxy, zeta),
                    loaded.query_margin(proxy, zeta)
                );
            }
        }
    }

    #[test]
    fn error_report_matches_reference_pipeline() {
        // 363 uniform tuples, bandwidth 0.13, and a proxy range chosen so
        // the halved Gaussian kernel count lands at 41.53.
        let range = (2.0 * std::f64::consts::PI).sqrt() * 363.0 * 0.13 / (2.0 * 41.53);
        let p_edges = linspace(0.0, range, GRID_BINS + 1);
        let mut adjusted = BTreeMap::new();
        for n in [1u32, 2, 4] {
            adjusted.insert(n, vec![0.5; GRID_BINS]);
        }
        let table = MarginTable {
            version: TABLE_FILE_VERSION,
            beta: conf(0.95),
            s_set: vec![1, 2, 4],
            p_edges,
            h_p: 0.13,
            adjusted_curves: adjusted,
            provenance: "test".into(),
        };
        let tuples: Vec<DataTuple> = (0..363)
            .map(|i| {
                let mut t = tuple(i, i as f64, 0.0, &[1, 2, 4]);
                t.mode = SampleMode::Uniform;
                t
            })
            .collect();
        let report = margin_error_report(&table, &tuples, conf(0.95)).unwrap();
        assert_eq!(report.entries.len(), 3);
        for entry in &report.entries {
            assert_abs_diff_eq!(entry.d_estimate, 41.53, epsilon = 0.01);
            assert!((entry.epsilon_percentile_bound - 0.09).abs() <= 0.005);
        }

        // Four times the tuples with the same bandwidth and range roughly
        // halves the bound.
        let more: Vec<DataTuple> = (0..4 * 363)
            .map(|i| {
                let mut t = tuple(i, i as f64, 0.0, &[1, 2, 4]);
                t.mode = SampleMode::Uniform;
                t
            })
            .collect();
        let report4 = margin_error_report(&table, &more, conf(0.95)).unwrap();
        let ratio = report4.entries[0].epsilon_percentile_bound
            / report.entries[0].epsilon_percentile_bound;
        assert!((ratio - 0.5).abs() <= 0.1, "ratio {ratio}");
    }

    #[test]
    fn error_report_flags_missing_uniform_mode() {
        let table = constant_curve_table(&[(1, 0.1)], 0.95);
        let tuples: Vec<DataTuple> = (0..40)
            .map(|i| {
                let mut t = tuple(i, i as f64, 0.0, &[1]);
                t.mode = SampleMode::Natural;
                t
            })
            .collect();
        let report = margin_error_report(&table, &tuples, conf(0.95)).unwrap();
        assert!(report.used_all_modes_fallback);
    }
}
