//! Plot emission from an inference summary CSV: long-format series files
//! and self-contained SVG line charts (one panel per model setting).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::inference::{InferenceSummary, NAIVE_MF_LABEL};
use super::{csv_bytes_with_header, read_csv, write_file};
use crate::error::Result;

const WIDTH: f64 = 680.0;
const PANEL_HEIGHT: f64 = 320.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 480.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 270.0;
const Y_TICKS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotMetric {
    L1Error,
    BoundRatio,
}

impl PlotMetric {
    pub const ALL: [PlotMetric; 2] = [PlotMetric::L1Error, PlotMetric::BoundRatio];

    pub fn stem(self) -> &'static str {
        match self {
            PlotMetric::L1Error => "l1_error",
            PlotMetric::BoundRatio => "bound_ratio",
        }
    }

    fn y_label(self) -> &'static str {
        match self {
            PlotMetric::L1Error => "mean l1 error",
            PlotMetric::BoundRatio => "mean lower bound / log Z",
        }
    }

    fn value(self, s: &InferenceSummary) -> Option<f64> {
        match self {
            PlotMetric::L1Error => Some(s.mean_l1),
            PlotMetric::BoundRatio => s.mean_ratio,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct SeriesRow<'a> {
    setting: &'a str,
    scheme: &'a str,
    k: usize,
    value: f64,
}

struct Series {
    scheme: String,
    points: Vec<(f64, f64)>,
}

struct Panel {
    setting: String,
    series: Vec<Series>,
    reference: Option<f64>,
}

/// Groups rows by setting, then scheme, in order of first appearance.
fn panels(rows: &[InferenceSummary], metric: PlotMetric) -> Vec<Panel> {
    let mut out: Vec<Panel> = Vec::new();
    for r in rows {
        let idx = match out.iter().position(|p| p.setting == r.setting) {
            Some(i) => i,
            None => {
                out.push(Panel { setting: r.setting.clone(), series: Vec::new(), reference: None });
                out.len() - 1
            }
        };
        let Some(v) = metric.value(r).filter(|v| v.is_finite()) else {
            continue;
        };
        let panel = &mut out[idx];
        if r.scheme == NAIVE_MF_LABEL {
            panel.reference = Some(v);
            continue;
        }
        match panel.series.iter_mut().find(|s| s.scheme == r.scheme) {
            Some(s) => s.points.push((r.k as f64, v)),
            None => panel.series.push(Series { scheme: r.scheme.clone(), points: vec![(r.k as f64, v)] }),
        }
    }
    for p in &mut out {
        for s in &mut p.series {
            s.points.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
    }
    out
}

struct Style {
    color: &'static str,
    dash: &'static str,
    marker: Marker,
}

#[derive(Clone, Copy)]
enum Marker {
    Circle,
    Diamond,
    Square,
}

fn style(scheme: &str) -> Style {
    let (dir, aff) = scheme.split_once('-').unwrap_or((scheme, ""));
    let (color, marker) = match dir {
        "minc" => ("#1f4fb4", Marker::Circle),
        "maxc" => ("#000000", Marker::Diamond),
        _ => ("#c0392b", Marker::Square),
    };
    let dash = match aff {
        "coupling" => "",
        "unit" => "6 3",
        "inverse_coupling" => "8 3 2 3",
        _ => "2 3",
    };
    Style { color, dash, marker }
}

fn marker_svg(out: &mut String, m: Marker, x: f64, y: f64, color: &str) {
    match m {
        Marker::Circle => {
            let _ = writeln!(out, r##"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"##);
        }
        Marker::Diamond => {
            let _ = writeln!(
                out,
                r##"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{color}"/>"##,
                x,
                y - 4.0,
                x + 4.0,
                y,
                x,
                y + 4.0,
                x - 4.0,
                y
            );
        }
        Marker::Square => {
            let _ =
                writeln!(out, r##"<rect x="{:.2}" y="{:.2}" width="6" height="6" fill="{color}"/>"##, x - 3.0, y - 3.0);
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values.fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

fn render_panel(out: &mut String, panel: Option<&Panel>, metric: PlotMetric, offset: f64) {
    let empty = Vec::new();
    let series = panel.map_or(&empty, |p| &p.series);
    let reference = panel.and_then(|p| p.reference);
    let xs = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (x0, x1) = match xs {
        Some((lo, hi)) if hi > lo => (lo, hi),
        Some((lo, _)) => (lo - 1.0, lo + 1.0),
        None => (0.0, 1.0),
    };
    let ys = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).chain(reference));
    let (y0, y1) = match (metric, ys) {
        (_, None) => (0.0, 1.0),
        (PlotMetric::L1Error, Some((_, hi))) => (0.0, if hi > 0.0 { hi * 1.1 } else { 1.0 }),
        (PlotMetric::BoundRatio, Some((lo, hi))) => {
            let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.05 * hi.abs().max(1.0) };
            (lo - pad, hi + pad)
        }
    };
    let top = offset + TOP;
    let bottom = offset + BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (RIGHT - LEFT);
    let py = |y: f64| bottom - (y - y0) / (y1 - y0) * (bottom - top);

    let title = panel.map_or(String::new(), |p| escape(&p.setting));
    let _ = writeln!(
        out,
        r##"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="13">{title}</text>"##,
        (LEFT + RIGHT) / 2.0,
        offset + 22.0
    );
    let _ = writeln!(
        out,
        r##"<path d="M{LEFT:.2},{top:.2} L{LEFT:.2},{bottom:.2} L{RIGHT:.2},{bottom:.2}" stroke="#000000" fill="none"/>"##
    );
    let mut kticks: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    kticks.sort_by(f64::total_cmp);
    kticks.dedup();
    for k in kticks {
        let x = px(k);
        let _ = writeln!(
            out,
            r##"<line x1="{x:.2}" y1="{bottom:.2}" x2="{x:.2}" y2="{:.2}" stroke="#000000"/>"##,
            bottom + 5.0
        );
        let _ = writeln!(
            out,
            r##"<text x="{x:.2}" y="{:.2}" text-anchor="middle" font-size="11">{k}</text>"##,
            bottom + 18.0
        );
    }
    for t in 0..=Y_TICKS {
        let v = y0 + (y1 - y0) * t as f64 / Y_TICKS as f64;
        let y = py(v);
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT:.2}" y2="{y:.2}" stroke="#000000"/>"##,
            LEFT - 5.0
        );
        let _ = writeln!(
            out,
            r##"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="11">{v:.3}</text>"##,
            LEFT - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        out,
        r##"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12">number of clusters k</text>"##,
        (LEFT + RIGHT) / 2.0,
        bottom + 38.0
    );
    let (lx, ly) = (18.0, (top + bottom) / 2.0);
    let _ = writeln!(
        out,
        r##"<text x="{lx:.2}" y="{ly:.2}" text-anchor="middle" font-size="12" transform="rotate(-90 {lx:.2} {ly:.2})">{}</text>"##,
        metric.y_label()
    );

    let mut legend_y = top;
    if reference.is_some() {
        legend_entry(out, legend_y, NAIVE_MF_LABEL, "#c0392b", "1 4", None);
        legend_y += 18.0;
    }
    for s in series {
        let st = style(&s.scheme);
        let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let dash = if st.dash.is_empty() { String::new() } else { format!(r##" stroke-dasharray="{}""##, st.dash) };
        let _ = writeln!(out, r##"<polyline points="{}" stroke="{}" fill="none"{dash}/>"##, pts.join(" "), st.color);
        for &(x, y) in &s.points {
            marker_svg(out, st.marker, px(x), py(y), st.color);
        }
        legend_entry(out, legend_y, &s.scheme, st.color, st.dash, Some(st.marker));
        legend_y += 18.0;
    }
    if let Some(r) = reference {
        let y = py(r);
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{RIGHT:.2}" y2="{y:.2}" stroke="#c0392b" stroke-width="2" stroke-dasharray="1 4"/>"##
        );
    }
}

fn legend_entry(out: &mut String, y: f64, label: &str, color: &str, dash: &str, marker: Option<Marker>) {
    let x = RIGHT + 20.0;
    let dash = if dash.is_empty() { String::new() } else { format!(r##" stroke-dasharray="{dash}""##) };
    let _ =
        writeln!(out, r##"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}"{dash}/>"##, x + 30.0);
    if let Some(m) = marker {
        marker_svg(out, m, x + 15.0, y, color);
    }
    let _ = writeln!(out, r##"<text x="{:.2}" y="{:.2}" font-size="11">{}</text>"##, x + 38.0, y + 4.0, escape(label));
}

/// SVG for one metric; an empty input gives a single panel with bare axes.
pub fn render_svg(rows: &[InferenceSummary], metric: PlotMetric) -> String {
    let panels = panels(rows, metric);
    let count = panels.len().max(1);
    let height = PANEL_HEIGHT * count as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif">"##
    );
    let _ = writeln!(out, r##"<rect x="0" y="0" width="{WIDTH}" height="{height}" fill="#ffffff"/>"##);
    for i in 0..count {
        render_panel(&mut out, panels.get(i), metric, i as f64 * PANEL_HEIGHT);
    }
    out.push_str("</svg>\n");
    out
}

fn series_csv(rows: &[InferenceSummary], metric: PlotMetric) -> Result<Vec<u8>> {
    let series: Vec<SeriesRow> = rows
        .iter()
        .filter_map(|r| {
            metric.value(r).map(|value| SeriesRow { setting: &r.setting, scheme: &r.scheme, k: r.k, value })
        })
        .collect();
    csv_bytes_with_header(&["setting", "scheme", "k", "value"], &series)
}

/// Reads an inference summary CSV and writes `<metric>.svg` and
/// `<metric>_series.csv` for every metric into `out_dir`.
pub fn emit_plots(summary_csv: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let rows: Vec<InferenceSummary> = read_csv(summary_csv)?;
    let mut written = Vec::new();
    for metric in PlotMetric::ALL {
        let svg = format!("{}.svg", metric.stem());
        write_file(out_dir, &svg, render_svg(&rows, metric).as_bytes())?;
        let data = format!("{}_series.csv", metric.stem());
        write_file(out_dir, &data, &series_csv(&rows, metric)?)?;
        written.push(out_dir.join(svg));
        written.push(out_dir.join(data));
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(setting: &str, scheme: &str, k: usize, l1: f64) -> InferenceSummary {
        InferenceSummary {
            setting: setting.into(),
            scheme: scheme.into(),
            k,
            trials: 1,
            mean_l1: l1,
            std_l1: 0.0,
            mean_gap: 0.0,
            std_gap: 0.0,
            mean_ratio: None,
            ratio_trials: 0,
            mean_sweeps: 1.0,
            bound_violations: 0,
            unconverged: 0,
        }
    }

    #[test]
    fn empty_input_draws_axes_only() {
        let svg = render_svg(&[], PlotMetric::L1Error);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("<path d=\"M"));
        assert!(!svg.contains("<polyline"));
    }

    #[test]
    fn single_series_is_one_polyline() {
        let rows = [row("s", "minc-coupling", 4, 0.1), row("s", "minc-coupling", 2, 0.2)];
        let svg = render_svg(&rows, PlotMetric::L1Error);
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert_eq!(svg.matches("<circle").count(), 3);
        // Missing ratios produce no series.
        assert!(!render_svg(&rows, PlotMetric::BoundRatio).contains("<polyline"));
    }

    #[test]
    fn naive_is_a_reference_line_and_panels_split_by_setting() {
        let rows = [row("a", NAIVE_MF_LABEL, 8, 0.3), row("a", "random", 2, 0.2), row("b", "random", 2, 0.25)];
        let svg = render_svg(&rows, PlotMetric::L1Error);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("stroke-dasharray=\"1 4\"").count(), 2);
        assert!(svg.contains(&format!("height=\"{}\"", 2.0 * PANEL_HEIGHT)));
    }

    #[test]
    fn rendering_is_deterministic() {
        let rows = [row("a", "maxc-unit", 3, 0.4), row("a", "maxc-unit", 6, 0.3)];
        assert_eq!(render_svg(&rows, PlotMetric::L1Error), render_svg(&rows, PlotMetric::L1Error));
    }
}
