//! File exports for fitted densities and margin tables: CSV for external
//! plotting and a self-contained SVG heatmap of the margin regions.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::collect::{DataTuple, SampleMode};
use crate::error::{Error, Result};

use super::{KdeGrid, MarginTable, GRID_BINS};

/// Long-format density export: one `(proxy_center, c_center, density)` row
/// per grid cell.
pub fn write_kde_csv(grid: &KdeGrid, path: &Path) -> Result<()> {
    let p_centers = grid.p_centers();
    let c_centers = grid.c_centers();
    let mut out = String::with_capacity(GRID_BINS * GRID_BINS * 24);
    out.push_str("proxy_center,c_center,density\n");
    for (j, p) in p_centers.iter().enumerate() {
        for (k, c) in c_centers.iter().enumerate() {
            writeln!(out, "{p},{c},{}", grid.density[j][k]).expect("string write");
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Proxy-value histogram with one count column per sampling mode, over 50
/// equal-width bins spanning the pooled range.
pub fn write_histogram_csv(tuples: &[DataTuple], path: &Path) -> Result<()> {
    const BINS: usize = 50;
    if tuples.is_empty() {
        return Err(Error::Validation(
            "cannot build a histogram from zero tuples".into(),
        ));
    }
    let lo = tuples.iter().map(|t| t.proxy).fold(f64::INFINITY, f64::min);
    let hi = tuples
        .iter()
        .map(|t| t.proxy)
        .fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / BINS as f64 } else { 1.0 };
    let mut natural = [0u64; BINS];
    let mut uniform = [0u64; BINS];
    for t in tuples {
        let bin = (((t.proxy - lo) / width) as usize).min(BINS - 1);
        match t.mode {
            SampleMode::Natural => natural[bin] += 1,
            SampleMode::Uniform => uniform[bin] += 1,
        }
    }
    let mut out = String::new();
    out.push_str("bin_lo,bin_hi,count_natural,count_uniform\n");
    for b in 0..BINS {
        writeln!(
            out,
            "{},{},{},{}",
            lo + width * b as f64,
            lo + width * (b + 1) as f64,
            natural[b],
            uniform[b]
        )
        .expect("string write");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Margin lookup export: one `(proxy_bin_center, zeta, margin)` row per
/// cell of the 200 x 100 heatmap grid.
pub fn write_heatmap_csv(table: &MarginTable, path: &Path) -> Result<()> {
    let p_centers = table.p_centers();
    let zetas = table.zeta_axis();
    let mut out = String::with_capacity(p_centers.len() * zetas.len() * 24);
    out.push_str("proxy_bin_center,zeta,margin\n");
    for p in &p_centers {
        for z in &zetas {
            writeln!(out, "{p},{z},{}", table.query_margin(*p, *z)).expect("string write");
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

const MARGIN_ZERO_COLOR: &str = "#5e4fa2";
const MARGIN_COLORS: [&str; 8] = [
    "#3288bd", "#66c2a5", "#abdda4", "#e6f598", "#fee08b", "#fdae61", "#f46d43", "#d53e4f",
];

fn color_for(table: &MarginTable, margin: u32) -> &'static str {
    if margin == 0 {
        return MARGIN_ZERO_COLOR;
    }
    let idx = table
        .s_set
        .iter()
        .position(|&n| n == margin)
        .unwrap_or(table.s_set.len().saturating_sub(1));
    MARGIN_COLORS[idx % MARGIN_COLORS.len()]
}

/// Self-contained SVG heatmap: margin regions in the proxy-versus-tolerance
/// plane, colored by margin size, with axes in environment reward units.
pub fn write_heatmap_svg(table: &MarginTable, title: &str, path: &Path) -> Result<()> {
    let p_centers = table.p_centers();
    let zetas = table.zeta_axis();
    let cols = p_centers.len();
    let rows = zetas.len();

    let (left, top) = (70.0, 44.0);
    let (plot_w, plot_h) = (560.0, 380.0);
    let (width, height) = (left + plot_w + 170.0, top + plot_h + 66.0);
    let cell_w = plot_w / cols as f64;
    let cell_h = plot_h / rows as f64;

    let mut svg = String::with_capacity(1 << 16);
    writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\">"
    )
    .expect("string write");
    writeln!(
        svg,
        "<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>"
    )
    .expect("string write");
    writeln!(
        svg,
        "<text x=\"{}\" y=\"24\" font-size=\"16\" text-anchor=\"middle\">{}</text>",
        left + plot_w / 2.0,
        xml_escape(title)
    )
    .expect("string write");

    // Cells, run-length merged along the proxy axis. Tolerance grows upward.
    for (zi, zeta) in zetas.iter().enumerate() {
        let y = top + plot_h - (zi + 1) as f64 * cell_h;
        let mut col = 0usize;
        while col < cols {
            let margin = table.query_margin(p_centers[col], *zeta);
            let mut end = col + 1;
            while end < cols && table.query_margin(p_centers[end], *zeta) == margin {
                end += 1;
            }
            writeln!(
                svg,
                "<rect x=\"{:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
                left + col as f64 * cell_w,
                (end - col) as f64 * cell_w + 0.1,
                cell_h + 0.1,
                color_for(table, margin)
            )
            .expect("string write");
            col = end;
        }
    }

    // Axes.
    writeln!(
        svg,
        "<rect x=\"{left}\" y=\"{top}\" width=\"{plot_w}\" height=\"{plot_h}\" fill=\"none\" \
         stroke=\"black\"/>"
    )
    .expect("string write");
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let p = table.p_min() + f * (table.p_max() - table.p_min());
        let x = left + f * plot_w;
        writeln!(
            svg,
            "<line x1=\"{x:.2}\" y1=\"{}\" x2=\"{x:.2}\" y2=\"{}\" stroke=\"black\"/>\
             <text x=\"{x:.2}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{p:.3}</text>",
            top + plot_h,
            top + plot_h + 5.0,
            top + plot_h + 18.0
        )
        .expect("string write");

        let zmax = *zetas.last().unwrap();
        let z = f * zmax;
        let y = top + plot_h - f * plot_h;
        writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{y:.2}\" x2=\"{left}\" y2=\"{y:.2}\" stroke=\"black\"/>\
             <text x=\"{}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\">{z:.3}</text>",
            left - 5.0,
            left - 8.0,
            y + 4.0
        )
        .expect("string write");
    }
    writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">proxy criticality</text>",
        left + plot_w / 2.0,
        top + plot_h + 42.0
    )
    .expect("string write");
    writeln!(
        svg,
        "<text x=\"18\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" \
         transform=\"rotate(-90 18 {})\">tolerance (reward units)</text>",
        top + plot_h / 2.0,
        top + plot_h / 2.0
    )
    .expect("string write");

    // Legend: one swatch per attainable margin value.
    let mut legend_y = top + 8.0;
    let legend_x = left + plot_w + 16.0;
    let mut values = vec![0u32];
    values.extend(&table.s_set);
    for value in values {
        writeln!(
            svg,
            "<rect x=\"{legend_x}\" y=\"{legend_y:.2}\" width=\"14\" height=\"14\" fill=\"{}\" \
             stroke=\"black\" stroke-width=\"0.4\"/>\
             <text x=\"{}\" y=\"{:.2}\" font-size=\"12\">margin {value}</text>",
            color_for(table, value),
            legend_x + 20.0,
            legend_y + 11.0
        )
        .expect("string write");
        legend_y += 20.0;
    }

    svg.push_str("</svg>\n");
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
