//! Report emission: per-round metric CSVs, sweep summary CSVs and the
//! multi-panel SVG accuracy chart (one panel per alpha, one curve per
//! scheme).
//!
//! All emitted floats use 6 significant digits. The per-round metrics CSV
//! contains only deterministic quantities: measured crypto wall-clock time
//! is reported in the run summary and the sweep CSV, never mixed into the
//! determinism-checked metric columns.

use std::path::Path;

use crate::engine::sweep::SweepCell;
use crate::engine::MetricSeries;
use crate::error::{FaflError, Result};

/// Format with 6 significant digits, trimming trailing zeros; falls back to
/// scientific notation outside [1e-4, 1e9).
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let mag = x.abs().log10().floor() as i32;
    let s = if (-4..6).contains(&mag) {
        let decimals = (5 - mag).max(0) as usize;
        let t = format!("{x:.decimals$}");
        if t.contains('.') {
            t.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            t
        }
    } else {
        format!("{x:.5e}")
    };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Fixed header of the per-round metrics CSV.
pub const METRICS_HEADER: &str = "round,accuracy,mean_loss,bytes_up,bytes_down,sim_latency_ms,\
dropped_updates,selected,reputations,payouts,group_losses,duals";

/// Deterministic per-round CSV for one run.
pub fn metrics_to_csv(series: &MetricSeries) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in &series.records {
        let selected: String =
            r.selected.iter().map(|&b| if b { '1' } else { '0' }).collect();
        let reputations: Vec<String> = r.reputations.iter().map(|&v| fmt_sig6(v)).collect();
        let payouts: Vec<String> = r.payouts.iter().map(|&v| fmt_sig6(v)).collect();
        let groups: Vec<String> =
            r.per_group_loss.iter().map(|(g, &l)| format!("{g}={}", fmt_sig6(l))).collect();
        let duals: Vec<String> = r.duals.iter().map(|&v| fmt_sig6(v)).collect();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.round,
            fmt_sig6(r.accuracy),
            fmt_sig6(r.mean_loss),
            r.bytes_up,
            r.bytes_down,
            fmt_sig6(r.sim_latency_ms),
            r.dropped_updates,
            selected,
            csv_field(&reputations.join(";")),
            csv_field(&payouts.join(";")),
            csv_field(&groups.join(";")),
            csv_field(&duals.join(";")),
        ));
    }
    out
}

/// One sweep summary row.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub mechanism: String,
    pub alpha: f64,
    pub max_labels: usize,
    pub seed: u64,
    pub final_accuracy: f64,
    pub last10_mean_accuracy: f64,
    pub total_bytes: u64,
    pub total_latency_ms: f64,
    pub crypto_time_ms: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

/// Summarize sweep cells, sorted by (mechanism, alpha, seed).
pub fn build_report(cells: &[SweepCell]) -> SweepReport {
    let mut rows: Vec<SweepRow> = cells
        .iter()
        .map(|cell| SweepRow {
            mechanism: cell.series.scheme.clone(),
            alpha: cell.series.alpha,
            max_labels: cell.series.max_labels,
            seed: cell.series.seed,
            final_accuracy: cell.series.final_accuracy(),
            last10_mean_accuracy: cell.series.last10_mean_accuracy(),
            total_bytes: cell.series.total_bytes,
            total_latency_ms: cell.series.total_sim_latency_ms,
            crypto_time_ms: cell.series.crypto_time_ms,
        })
        .collect();
    rows.sort_by(|a, b| {
        a.mechanism
            .cmp(&b.mechanism)
            .then(a.alpha.partial_cmp(&b.alpha).unwrap())
            .then(a.seed.cmp(&b.seed))
    });
    SweepReport { rows }
}

pub const SWEEP_HEADER: &str = "mechanism,alpha,max_labels,seed,final_accuracy,\
last10_mean_accuracy,total_bytes,total_latency_ms,crypto_time_ms";

pub fn sweep_to_csv(report: &SweepReport) -> Result<String> {
    if report.rows.is_empty() {
        return Err(FaflError::Report("empty sweep report".into()));
    }
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            csv_field(&r.mechanism),
            fmt_sig6(r.alpha),
            r.max_labels,
            r.seed,
            fmt_sig6(r.final_accuracy),
            fmt_sig6(r.last10_mean_accuracy),
            r.total_bytes,
            fmt_sig6(r.total_latency_ms),
            fmt_sig6(r.crypto_time_ms),
        ));
    }
    Ok(out)
}

pub fn emit_csv(report: &SweepReport, path: &Path) -> Result<()> {
    std::fs::write(path, sweep_to_csv(report)?)?;
    Ok(())
}

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 300.0;
const MARGIN_L: f64 = 48.0;
const MARGIN_B: f64 = 40.0;
const MARGIN_T: f64 = 28.0;
const PLOT_W: f64 = PANEL_W - MARGIN_L - 16.0;
const PLOT_H: f64 = PANEL_H - MARGIN_T - MARGIN_B;
const COLORS: [&str; 8] =
    ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f"];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Accuracy-vs-round line chart: one panel per alpha (ascending), one curve
/// per scheme, shared [0,1] accuracy axis, legend below the panels.
pub fn panels_svg(cells: &[SweepCell]) -> Result<String> {
    if cells.is_empty() {
        return Err(FaflError::Report("no series to plot".into()));
    }

    let mut alphas: Vec<f64> = cells.iter().map(|c| c.series.alpha).collect();
    alphas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    alphas.dedup();
    let mut schemes: Vec<String> = cells.iter().map(|c| c.series.scheme.clone()).collect();
    schemes.sort();
    schemes.dedup();
    let max_round = cells
        .iter()
        .flat_map(|c| c.series.records.last())
        .map(|r| r.round)
        .max()
        .unwrap_or(0)
        .max(1) as f64;

    let width = alphas.len() as f64 * PANEL_W + 20.0;
    let legend_h = 26.0 * ((schemes.len() as f64 / 3.0).ceil()) + 16.0;
    let height = PANEL_H + legend_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    for (pi, &alpha) in alphas.iter().enumerate() {
        let x0 = pi as f64 * PANEL_W + 10.0 + MARGIN_L;
        let y0 = MARGIN_T;
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"16\" text-anchor=\"middle\" font-size=\"13\">alpha = {}</text>\n",
            x0 + PLOT_W / 2.0,
            fmt_sig6(alpha)
        ));
        svg.push_str(&format!(
            "<rect x=\"{x0}\" y=\"{y0}\" width=\"{PLOT_W}\" height=\"{PLOT_H}\" fill=\"none\" stroke=\"#333\"/>\n"
        ));
        // Accuracy gridlines and tick labels.
        for tick in 0..=5 {
            let acc = tick as f64 / 5.0;
            let y = y0 + PLOT_H * (1.0 - acc);
            svg.push_str(&format!(
                "<line x1=\"{x0}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#ddd\"/>\n",
                x0 + PLOT_W
            ));
            svg.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
                x0 - 6.0,
                y + 4.0,
                fmt_sig6(acc)
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">round</text>\n",
            x0 + PLOT_W / 2.0,
            y0 + PLOT_H + 30.0
        ));
        for frac in [0.0, 0.5, 1.0] {
            let x = x0 + PLOT_W * frac;
            svg.push_str(&format!(
                "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
                y0 + PLOT_H + 14.0,
                fmt_sig6(max_round * frac)
            ));
        }

        for cell in cells.iter().filter(|c| c.series.alpha == alpha) {
            let color = COLORS
                [schemes.iter().position(|s| *s == cell.series.scheme).unwrap() % COLORS.len()];
            let points: Vec<String> = cell
                .series
                .records
                .iter()
                .map(|r| {
                    let x = x0 + PLOT_W * r.round as f64 / max_round;
                    let y = y0 + PLOT_H * (1.0 - r.accuracy.clamp(0.0, 1.0));
                    format!("{x:.2},{y:.2}")
                })
                .collect();
            svg.push_str(&format!(
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                points.join(" ")
            ));
        }
    }

    // Legend.
    for (si, scheme) in schemes.iter().enumerate() {
        let col = si % 3;
        let row = si / 3;
        let x = 20.0 + col as f64 * 220.0;
        let y = PANEL_H + 18.0 + row as f64 * 26.0;
        svg.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"{}\" stroke-width=\"2\"/>\n",
            x + 24.0,
            COLORS[si % COLORS.len()]
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\">{}</text>\n",
            x + 30.0,
            y + 4.0,
            xml_escape(scheme)
        ));
    }

    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_panels(cells: &[SweepCell], path: &Path) -> Result<()> {
    std::fs::write(path, panels_svg(cells)?)?;
    Ok(())
}
