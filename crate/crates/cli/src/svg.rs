//! Minimal static SVG writer: line charts for loss curves and bar charts
//! for grouped metrics. No external dependencies, no interactivity.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"16\">{title}</text>\n",
        WIDTH / 2.0
    )
}

fn axes(x_label: &str, y_label: &str) -> String {
    let x0 = MARGIN;
    let y0 = HEIGHT - MARGIN;
    let x1 = WIDTH - MARGIN;
    let y1 = MARGIN;
    format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{x_label}</text>\n\
         <text x=\"16\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" \
         transform=\"rotate(-90 16 {})\">{y_label}</text>\n",
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    )
}

/// Multi-series line chart; x is the index within each series.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[(&str, &[f64])]) -> String {
    let mut out = header(title) + &axes(x_label, y_label);
    let all: Vec<f64> = series
        .iter()
        .flat_map(|(_, ys)| ys.iter().copied())
        .filter(|v| v.is_finite())
        .collect();
    if all.is_empty() {
        return out + "</svg>\n";
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in &all {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    if (hi - lo).abs() < 1e-12 {
        hi = lo + 1.0;
    }
    let n = series.iter().map(|(_, ys)| ys.len()).max().unwrap_or(1).max(2);
    let sx = |i: usize| MARGIN + (WIDTH - 2.0 * MARGIN) * i as f64 / (n - 1) as f64;
    let sy = |v: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - lo) / (hi - lo);
    for (k, (name, ys)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = ys
            .iter()
            .enumerate()
            .map(|(i, v)| format!("{:.2},{:.2}", sx(i), sy(*v)))
            .collect();
        let _ = writeln!(
            out,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            pts.join(" ")
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.0}\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"11\" \
             fill=\"{color}\">{name}</text>",
            WIDTH - MARGIN + 4.0 - 90.0,
            MARGIN + 14.0 * (k + 1) as f64
        );
    }
    // y-axis extremes
    let _ = writeln!(
        out,
        "<text x=\"{:.0}\" y=\"{:.0}\" text-anchor=\"end\" font-family=\"sans-serif\" \
         font-size=\"10\">{hi:.3}</text>\n\
         <text x=\"{:.0}\" y=\"{:.0}\" text-anchor=\"end\" font-family=\"sans-serif\" \
         font-size=\"10\">{lo:.3}</text>",
        MARGIN - 4.0,
        MARGIN + 4.0,
        MARGIN - 4.0,
        HEIGHT - MARGIN + 4.0
    );
    out + "</svg>\n"
}

/// Simple labelled bar chart from (label, value) pairs.
pub fn bar_chart(title: &str, x_label: &str, y_label: &str, bars: &[(String, f64)]) -> String {
    let mut out = header(title) + &axes(x_label, y_label);
    if bars.is_empty() {
        return out + "</svg>\n";
    }
    let hi = bars.iter().map(|(_, v)| *v).fold(0.0f64, f64::max).max(1e-12);
    let span = WIDTH - 2.0 * MARGIN;
    let bw = span / bars.len() as f64 * 0.6;
    for (i, (label, v)) in bars.iter().enumerate() {
        let cx = MARGIN + span * (i as f64 + 0.5) / bars.len() as f64;
        let h = (HEIGHT - 2.0 * MARGIN) * v / hi;
        let _ = writeln!(
            out,
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{bw:.1}\" height=\"{h:.1}\" fill=\"{}\"/>",
            cx - bw / 2.0,
            HEIGHT - MARGIN - h,
            COLORS[0]
        );
        let _ = writeln!(
            out,
            "<text x=\"{cx:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
             font-size=\"11\">{label}</text>\n\
             <text x=\"{cx:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
             font-size=\"10\">{v:.2}</text>",
            HEIGHT - MARGIN + 16.0,
            HEIGHT - MARGIN - h - 4.0
        );
    }
    out + "</svg>\n"
}
