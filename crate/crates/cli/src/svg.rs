//! Minimal SVG line plots.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Markers,
    Line,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
}

impl Series {
    pub fn markers(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self { label: label.into(), points, style: Style::Markers }
    }

    pub fn line(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self { label: label.into(), points, style: Style::Line }
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) =
        values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= f64::EPSILON * lo.abs().max(1.0) {
        let pad = lo.abs().max(1.0) * 0.05;
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders axes with three ticks each, one polyline or marker set per series, and a legend.
pub fn plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let all = || series.iter().flat_map(|s| s.points.iter());
    let (x0, x1) = bounds(all().map(|p| p.0));
    let (y0, y1) = bounds(all().map(|p| p.1));
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(out, r#"<path d="M{left} {top} L{left} {bottom} L{right} {bottom}" fill="none" stroke="black"/>"#);
    for k in 0..3 {
        let f = k as f64 / 2.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ =
            writeln!(out, r#"<line x1="{px:.2}" y1="{bottom}" x2="{px:.2}" y2="{}" stroke="black"/>"#, bottom + 5.0);
        let _ = writeln!(out, r#"<text x="{px:.2}" y="{}" text-anchor="middle">{xv:.4}</text>"#, bottom + 18.0);
        let _ = writeln!(out, r#"<line x1="{}" y1="{py:.2}" x2="{left}" y2="{py:.2}" stroke="black"/>"#, left - 5.0);
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{yv:.4}</text>"#, left - 8.0, py + 4.0);
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 15.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="15" y="{0}" text-anchor="middle" transform="rotate(-90 15 {0})">{1}</text>"#,
        HEIGHT / 2.0,
        escape(y_label)
    );

    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        match s.style {
            Style::Line => {
                let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
                let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}"/>"#, pts.join(" "));
            }
            Style::Markers => {
                for &(x, y) in &s.points {
                    let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(x), sy(y));
                }
            }
        }
        let ly = top + 14.0 * i as f64;
        let _ =
            writeln!(out, r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/>"#, right - 110.0, ly - 9.0);
        let _ = writeln!(out, r#"<text x="{}" y="{ly}">{}</text>"#, right - 95.0, escape(&s.label));
    }
    out.push_str("</svg>\n");
    out
}
