//! Artifact writers: trace CSV and dependency-free SVG line plots.
//!
//! Plots are plain 800x500 SVG text assembled with fixed-precision
//! coordinates, so a rerun with the same numbers reproduces the file
//! byte for byte.

use phi_means::solvers::TraceEntry;
use std::fmt::Write as _;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 500.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 25.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;

pub const PALETTE: [&str; 4] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"];

pub fn trace_csv(trace: &[TraceEntry]) -> String {
    let mut out = String::from("iteration,loss,step_norm\n");
    for t in trace {
        let _ = writeln!(out, "{},{},{}", t.iteration, t.loss, t.step_norm);
    }
    out
}

pub struct Series<'a> {
    pub name: &'a str,
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
}

struct Axis {
    log: bool,
    min: f64,
    max: f64,
}

impl Axis {
    fn fit(log: bool, values: impl Iterator<Item = f64>) -> Axis {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in values {
            let t = if log { (v > 0.0).then(|| v.log10()) } else { v.is_finite().then_some(v) };
            if let Some(t) = t.filter(|t| t.is_finite()) {
                min = min.min(t);
                max = max.max(t);
            }
        }
        if !min.is_finite() || !max.is_finite() {
            (min, max) = (0.0, 1.0);
        }
        if (max - min).abs() < 1e-12 {
            min -= 0.5;
            max += 0.5;
        }
        let pad = 0.04 * (max - min);
        Axis { log, min: min - pad, max: max + pad }
    }

    fn coord(&self, v: f64) -> Option<f64> {
        let t = if self.log {
            if v > 0.0 {
                v.log10()
            } else {
                return None;
            }
        } else if v.is_finite() {
            v
        } else {
            return None;
        };
        Some((t - self.min) / (self.max - self.min))
    }

    /// Tick positions in transformed units with their labels.
    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let lo = self.min.ceil() as i64;
            let hi = self.max.floor() as i64;
            let span = (hi - lo).max(0) as usize + 1;
            let step = (span / 8).max(1) as i64;
            (lo..=hi)
                .step_by(step as usize)
                .map(|k| (k as f64, format!("1e{k}")))
                .collect()
        } else {
            (0..5)
                .map(|i| {
                    let t = self.min + (self.max - self.min) * i as f64 / 4.0;
                    (t, format!("{t:.3}"))
                })
                .collect()
        }
    }
}

/// Render series as polylines over labelled axes.
///
/// Points that cannot be placed (non-positive on a log axis, non-finite
/// anywhere) are dropped from their polyline, not interpolated over.
pub fn line_plot(
    title: &str,
    xlabel: &str,
    ylabel: &str,
    logx: bool,
    logy: bool,
    series: &[Series],
) -> String {
    let xaxis = Axis::fit(logx, series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let yaxis = Axis::fit(logy, series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let px = |u: f64| MARGIN_L + u * plot_w;
    let py = |u: f64| HEIGHT - MARGIN_B - u * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(svg, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    let _ = writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{}</text>",
        WIDTH / 2.0,
        title
    );

    for (t, label) in xaxis.ticks() {
        let u = (t - xaxis.min) / (xaxis.max - xaxis.min);
        let x = px(u);
        let _ = writeln!(
            svg,
            "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#dddddd\"/>",
            py(0.0),
            py(1.0)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{x:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{label}</text>",
            HEIGHT - MARGIN_B + 18.0
        );
    }
    for (t, label) in yaxis.ticks() {
        let u = (t - yaxis.min) / (yaxis.max - yaxis.min);
        let y = py(u);
        let _ = writeln!(
            svg,
            "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#dddddd\"/>",
            px(0.0),
            px(1.0)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">{label}</text>",
            MARGIN_L - 8.0,
            y + 4.0
        );
    }

    let _ = writeln!(
        svg,
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{plot_w}\" height=\"{plot_h}\" fill=\"none\" stroke=\"#333333\"/>"
    );
    let _ = writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{}</text>",
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 12.0,
        xlabel
    );
    let _ = writeln!(
        svg,
        "<text x=\"18\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 {:.2})\">{}</text>",
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0,
        ylabel
    );

    for (i, s) in series.iter().enumerate() {
        let mut pts = String::new();
        for &(x, y) in &s.points {
            if let (Some(u), Some(v)) = (xaxis.coord(x), yaxis.coord(y)) {
                let _ = write!(pts, "{:.2},{:.2} ", px(u), py(v));
            }
        }
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>",
            s.color,
            pts.trim_end()
        );
        let ly = MARGIN_T + 16.0 + 18.0 * i as f64;
        let _ = writeln!(
            svg,
            "<line x1=\"{:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{}\" stroke-width=\"2\"/>",
            WIDTH - MARGIN_R - 130.0,
            WIDTH - MARGIN_R - 105.0,
            s.color
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
            WIDTH - MARGIN_R - 100.0,
            ly + 4.0,
            s.name
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_csv_has_header_and_rows() {
        let trace = vec![
            TraceEntry { iteration: 0, loss: 2.0, step_norm: 0.5 },
            TraceEntry { iteration: 1, loss: 1.0, step_norm: 0.25 },
        ];
        let csv = trace_csv(&trace);
        assert_eq!(csv, "iteration,loss,step_norm\n0,2,0.5\n1,1,0.25\n");
    }

    #[test]
    fn plot_is_deterministic_and_viewport_sized() {
        let series = [Series {
            name: "median",
            color: PALETTE[0],
            points: vec![(10.0, 0.5), (100.0, 0.1), (1000.0, 0.02)],
        }];
        let a = line_plot("t", "n", "rho", true, true, &series);
        let b = line_plot("t", "n", "rho", true, true, &series);
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.contains("width=\"800\""));
        assert!(a.contains("height=\"500\""));
        assert!(a.contains("polyline"));
    }

    #[test]
    fn log_axis_drops_nonpositive_points() {
        let series = [Series { name: "x", color: PALETTE[1], points: vec![(1.0, 0.0), (10.0, 1.0)] }];
        let svg = line_plot("t", "n", "y", true, true, &series);
        // Only one representable point leaves a single coordinate pair.
        let poly = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        assert_eq!(poly.matches(',').count(), 1);
    }
}
