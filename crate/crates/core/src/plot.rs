//! Minimal SVG charts: density overlays and distance-vs-parameter lines.
//!
//! Output depends only on the input data, so identical inputs give identical
//! bytes.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::read_csv_table;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 460.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const TICKS: usize = 5;

const PALETTE: [&str; 8] = [
    "#000000", "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.into(),
            points,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Labels {
    pub title: String,
    pub x: String,
    pub y: String,
}

/// Data range padded by 5% on each side; a zero-width range is widened to
/// `±5%` of its value (or ±0.05 at zero).
pub fn padded_range(values: impl IntoIterator<Item = f64>) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values.into_iter().filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        return None;
    }
    let span = hi - lo;
    let pad = if span > 0.0 {
        0.05 * span
    } else if lo != 0.0 {
        0.05 * lo.abs()
    } else {
        0.05
    };
    Some((lo - pad, hi + pad))
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn frame(series: &[Series], y_floor: Option<f64>) -> Result<Frame> {
    let pts = || series.iter().flat_map(|s| s.points.iter());
    let x = padded_range(pts().map(|p| p.0)).ok_or_else(|| Error::usage("nothing to plot"))?;
    let mut y = padded_range(pts().map(|p| p.1)).ok_or_else(|| Error::usage("nothing to plot"))?;
    if let Some(f) = y_floor {
        y.0 = y.0.max(f);
    }
    Ok(Frame { x, y })
}

fn header(svg: &mut String, labels: &Labels, f: &Frame) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        escape(&labels.title)
    );
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let (y0, y1) = (HEIGHT - BOTTOM, TOP);
    let _ = writeln!(
        svg,
        r#"<path d="M{x0:.2},{y1:.2} L{x0:.2},{y0:.2} L{x1:.2},{y0:.2}" fill="none" stroke="black"/>"#
    );
    for i in 0..=TICKS {
        let t = i as f64 / TICKS as f64;
        let xv = f.x.0 + t * (f.x.1 - f.x.0);
        let px = f.px(xv);
        let _ = writeln!(
            svg,
            r#"<line x1="{px:.2}" y1="{y0:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            y0 + 5.0,
            y0 + 19.0,
            tick_label(xv)
        );
        let yv = f.y.0 + t * (f.y.1 - f.y.0);
        let py = f.py(yv);
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{x0:.2}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            py + 4.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 18.0,
        escape(&labels.x)
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(&labels.y)
    );
}

fn legend(svg: &mut String, series: &[Series]) {
    let x = WIDTH - RIGHT + 15.0;
    for (i, s) in series.iter().enumerate() {
        let y = TOP + 10.0 + 20.0 * i as f64;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            x + 22.0,
            x + 28.0,
            y + 4.0,
            escape(&s.label)
        );
    }
}

/// One path per density curve, with a legend.
pub fn kde_overlay_svg(curves: &[Series], labels: &Labels) -> Result<String> {
    let f = frame(curves, Some(0.0))?;
    let mut svg = String::new();
    header(&mut svg, labels, &f);
    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut d = String::new();
        for (j, &(x, y)) in c.points.iter().enumerate() {
            let _ = write!(
                d,
                "{}{:.2},{:.2} ",
                if j == 0 { "M" } else { "L" },
                f.px(x),
                f.py(y)
            );
        }
        let _ = writeln!(
            svg,
            r#"<path class="curve" d="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            d.trim_end()
        );
    }
    legend(&mut svg, curves);
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// One polyline per series; a series with a single point is drawn as one
/// marker instead.
pub fn distance_lines_svg(series: &[Series], labels: &Labels) -> Result<String> {
    let f = frame(series, None)?;
    let mut svg = String::new();
    header(&mut svg, labels, &f);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if s.points.len() > 1 {
            let pts: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                pts.join(" ")
            );
        }
        for &(x, y) in &s.points {
            let _ = writeln!(
                svg,
                r#"<circle class="marker" cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                f.px(x),
                f.py(y)
            );
        }
    }
    legend(&mut svg, series);
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn column(path: &Path, headers: &[String], name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::parse(path, 1, format!("missing column `{name}`")))
}

fn number(path: &Path, line: usize, col: &str, cell: &str) -> Result<f64> {
    cell.parse().map_err(|_| {
        Error::parse(
            path,
            line,
            format!("`{col}` value `{cell}` is not a number"),
        )
    })
}

/// A density curve from an `x,density` CSV.
pub fn read_curve(path: &Path, label: impl Into<String>) -> Result<Series> {
    let (headers, rows) = read_csv_table(path)?;
    let xi = column(path, &headers, "x")?;
    let di = column(path, &headers, "density")?;
    let points = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            Ok((
                number(path, i + 2, "x", &r[xi])?,
                number(path, i + 2, "density", &r[di])?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Series::new(label, points))
}

/// Series from an aggregate CSV: one per distinct `series_col` value (or a
/// single series when `series_col` is `None`), points sorted by x. A
/// `none` x value (no generational turnover) is not numeric and is skipped.
pub fn read_distance_series(
    path: &Path,
    x_col: &str,
    series_col: Option<&str>,
    y_col: &str,
) -> Result<Vec<Series>> {
    let (headers, rows) = read_csv_table(path)?;
    let xi = column(path, &headers, x_col)?;
    let yi = column(path, &headers, y_col)?;
    let si = series_col.map(|c| column(path, &headers, c)).transpose()?;
    let mut out: Vec<Series> = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        if r[xi] == "none" {
            continue;
        }
        let x = number(path, i + 2, x_col, &r[xi])?;
        let y = number(path, i + 2, y_col, &r[yi])?;
        let label = match (series_col, si) {
            (Some(c), Some(s)) => format!("{c}={}", r[s]),
            _ => y_col.to_string(),
        };
        match out.iter_mut().find(|s| s.label == label) {
            Some(s) => s.points.push((x, y)),
            None => out.push(Series::new(label, vec![(x, y)])),
        }
    }
    for s in out.iter_mut() {
        s.points.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    Ok(out)
}
