//! Minimal SVG line-chart writer for overlaying two series (e.g. actual vs
//! recovered initial state). No styling knobs; deterministic output.

use std::fmt::Write as _;
use std::path::Path;

use crate::CliError;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 48.0;

fn polyline(points: &[(f64, f64)], color: &str) -> String {
    let mut path = String::new();
    for (i, (x, y)) in points.iter().enumerate() {
        let _ = write!(path, "{}{x:.2},{y:.2}", if i == 0 { "" } else { " " });
    }
    format!("<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{path}\"/>\n")
}

/// Writes an SVG overlaying `first` and `second` against their index.
pub fn write_overlay(
    path: &Path,
    title: &str,
    first_label: &str,
    first: &[f64],
    second_label: &str,
    second: &[f64],
) -> Result<(), CliError> {
    let count = first.len().max(second.len()).max(2);
    let all: Vec<f64> = first.iter().chain(second.iter()).copied().collect();
    let mut lo = all.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let x_of = |i: usize| MARGIN + (WIDTH - 2.0 * MARGIN) * i as f64 / (count - 1) as f64;
    let y_of = |v: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - lo) / (hi - lo);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(svg, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    // axes
    let _ = writeln!(
        svg,
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>",
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>",
        m = MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN
    );
    let _ = writeln!(
        svg,
        "<text x=\"{x}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>",
        x = WIDTH / 2.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"{m}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"11\">{lo:.4} .. {hi:.4}</text>",
        m = 4.0,
        y = HEIGHT / 2.0
    );

    let series = [(first, "steelblue", first_label), (second, "crimson", second_label)];
    for (idx, (values, color, label)) in series.iter().enumerate() {
        let points: Vec<(f64, f64)> = values.iter().enumerate().map(|(i, &v)| (x_of(i), y_of(v))).collect();
        svg.push_str(&polyline(&points, color));
        let _ = writeln!(
            svg,
            "<text x=\"{x}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{color}\">{label}</text>",
            x = WIDTH - MARGIN - 140.0,
            y = MARGIN + 16.0 * (idx as f64 + 1.0)
        );
    }
    svg.push_str("</svg>\n");

    std::fs::write(path, svg).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
