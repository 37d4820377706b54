//! Report emission: metrics as JSON plus static SVG figures (distance
//! curve, confusion matrix, sweep curves). Everything is written to plain
//! files; no display is required.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{DigError, Result};
use crate::metrics::MetricsReport;

fn io_err(path: &Path, e: impl std::fmt::Display) -> DigError {
    DigError::Load(format!("{}: {e}", path.display()))
}

/// Writes the report as pretty-printed JSON.
pub fn write_report_json(path: &Path, report: &MetricsReport) -> Result<()> {
    let text = serde_json::to_string_pretty(report)
        .map_err(|e| DigError::Validation(format!("report serialization: {e}")))?;
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn read_report_json(path: &Path) -> Result<MetricsReport> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| DigError::Validation(format!("report parse: {e}")))
}

const PLOT_W: f64 = 640.0;
const PLOT_H: f64 = 420.0;
const MARGIN: f64 = 60.0;

fn svg_header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{PLOT_W}\" height=\"{PLOT_H}\" \
         viewBox=\"0 0 {PLOT_W} {PLOT_H}\" font-family=\"sans-serif\">\n\
         <rect width=\"{PLOT_W}\" height=\"{PLOT_H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{title}</text>\n",
        PLOT_W / 2.0
    )
}

/// One curve for a line plot: label plus (x, y) points.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const SERIES_COLORS: [&str; 4] = ["#1f6fb4", "#d0541e", "#2d8a43", "#8246a8"];

/// Renders one or more series as an SVG line chart with axis labels.
pub fn line_plot(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
) -> Result<()> {
    if series.is_empty() || series.iter().any(|s| s.points.is_empty()) {
        return Err(DigError::Validation("line plot needs nonempty series".into()));
    }
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let ys = series.iter().flat_map(|s| s.points.iter().map(|p| p.1));
    let (x_min, x_max) = bounds(xs);
    let (y_min, y_max) = bounds(ys);
    let (x_min, x_max) = pad_range(x_min, x_max);
    let (y_min, y_max) = pad_range(y_min, y_max);

    let to_px = |x: f64, y: f64| {
        let px = MARGIN + (x - x_min) / (x_max - x_min) * (PLOT_W - 2.0 * MARGIN);
        let py = PLOT_H - MARGIN - (y - y_min) / (y_max - y_min) * (PLOT_H - 2.0 * MARGIN);
        (px, py)
    };

    let mut svg = svg_header(title);
    // Axes.
    let (ox, oy) = (MARGIN, PLOT_H - MARGIN);
    let _ = write!(
        svg,
        "<line x1=\"{ox}\" y1=\"{oy}\" x2=\"{}\" y2=\"{oy}\" stroke=\"black\"/>\n\
         <line x1=\"{ox}\" y1=\"{oy}\" x2=\"{ox}\" y2=\"{MARGIN}\" stroke=\"black\"/>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\">{x_label}</text>\n\
         <text x=\"16\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\" \
          transform=\"rotate(-90 16 {})\">{y_label}</text>\n",
        PLOT_W - MARGIN,
        PLOT_W / 2.0,
        PLOT_H - 16.0,
        PLOT_H / 2.0,
        PLOT_H / 2.0,
    );
    // Tick labels at the range ends.
    let _ = write!(
        svg,
        "<text x=\"{ox}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{x_min:.3}</text>\n\
         <text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{x_max:.3}</text>\n\
         <text x=\"{}\" y=\"{oy}\" font-size=\"11\" text-anchor=\"end\">{y_min:.3}</text>\n\
         <text x=\"{}\" y=\"{MARGIN}\" font-size=\"11\" text-anchor=\"end\">{y_max:.3}</text>\n",
        PLOT_H - MARGIN + 18.0,
        PLOT_W - MARGIN,
        PLOT_H - MARGIN + 18.0,
        MARGIN - 6.0,
        MARGIN - 6.0,
    );
    for (si, s) in series.iter().enumerate() {
        let color = SERIES_COLORS[si % SERIES_COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| {
                let (px, py) = to_px(x, y);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        let _ = write!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            pts.join(" ")
        );
        for &(x, y) in &s.points {
            let (px, py) = to_px(x, y);
            let _ = write!(svg, "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"3\" fill=\"{color}\"/>\n");
        }
        let _ = write!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{color}\">{}</text>\n",
            PLOT_W - MARGIN + 4.0,
            MARGIN + 16.0 * si as f64,
            s.label
        );
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg).map_err(|e| io_err(path, e))
}

/// Renders a confusion matrix as a shaded grid, rows = true class.
pub fn confusion_matrix_plot(
    path: &Path,
    title: &str,
    matrix: &[Vec<usize>],
    class_names: &[&str],
) -> Result<()> {
    let m = matrix.len();
    if m == 0 || matrix.iter().any(|r| r.len() != m) || class_names.len() != m {
        return Err(DigError::Validation("confusion matrix must be square with names".into()));
    }
    let cell = ((PLOT_W.min(PLOT_H) - 2.0 * MARGIN) / m as f64).floor();
    let max = matrix.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
    let mut svg = svg_header(title);
    for (i, row) in matrix.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let x = MARGIN + j as f64 * cell;
            let y = MARGIN + i as f64 * cell;
            let shade = 255.0 - 215.0 * (v as f64 / max);
            let _ = write!(
                svg,
                "<rect x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" \
                 fill=\"rgb({0},{0},255)\" stroke=\"#ccc\"/>\n",
                shade as u32
            );
            if v > 0 {
                let _ = write!(
                    svg,
                    "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"middle\">{v}</text>\n",
                    x + cell / 2.0,
                    y + cell / 2.0 + 3.0
                );
            }
        }
        let _ = write!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"9\" text-anchor=\"end\">{}</text>\n",
            MARGIN - 4.0,
            MARGIN + i as f64 * cell + cell / 2.0 + 3.0,
            class_names[i]
        );
        let _ = write!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"9\" text-anchor=\"end\" \
             transform=\"rotate(-60 {:.1} {:.1})\">{}</text>\n",
            MARGIN + i as f64 * cell + cell / 2.0,
            MARGIN - 6.0,
            MARGIN + i as f64 * cell + cell / 2.0,
            MARGIN - 6.0,
            class_names[i]
        );
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg).map_err(|e| io_err(path, e))
}

/// Emits the standard figure set for one report into `dir`.
pub fn emit_figures(dir: &Path, report: &MetricsReport, class_names: &[&str]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    if !report.distance_bins.is_empty() {
        let series = Series {
            label: "success".into(),
            points: report
                .distance_bins
                .iter()
                .map(|b| ((b.lo + b.hi) / 2.0, b.accuracy))
                .collect(),
        };
        line_plot(
            &dir.join("accuracy_vs_distance.svg"),
            "Success rate vs distance",
            "distance (m)",
            "success rate",
            &[series],
        )?;
    }
    confusion_matrix_plot(
        &dir.join("confusion_matrix.svg"),
        "Confusion matrix",
        &report.confusion,
        class_names,
    )
}

fn bounds(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn pad_range(lo: f64, hi: f64) -> (f64, f64) {
    if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = (hi - lo) * 0.05;
        (lo - pad, hi + pad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::DistanceBin;

    fn sample_report() -> MetricsReport {
        MetricsReport {
            success_rate: 0.9,
            dwa_raw: 1.1,
            dwa_normalized: 0.88,
            gss: 0.93,
            macro_f1: 0.89,
            mean_ap: 0.91,
            confusion: vec![vec![3, 1], vec![0, 4]],
            distance_bins: vec![
                DistanceBin { lo: 2.0, hi: 16.0, count: 4, accuracy: 1.0 },
                DistanceBin { lo: 16.0, hi: 30.0, count: 4, accuracy: 0.75 },
            ],
            absent_classes: vec![],
        }
    }

    #[test]
    fn report_json_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        let report = sample_report();
        write_report_json(&path, &report).unwrap();
        let back = read_report_json(&path).unwrap();
        assert_eq!(back.success_rate, report.success_rate);
        assert_eq!(back.confusion, report.confusion);
        assert_eq!(back.distance_bins.len(), 2);
    }

    #[test]
    fn figures_are_valid_svg_files() {
        let dir = tempfile::tempdir().unwrap();
        emit_figures(dir.path(), &sample_report(), &["a", "b"]).unwrap();
        for name in ["accuracy_vs_distance.svg", "confusion_matrix.svg"] {
            let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
            assert!(text.starts_with("<svg"));
            assert!(text.trim_end().ends_with("</svg>"));
        }
    }

    #[test]
    fn line_plot_rejects_empty_series() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.svg");
        assert!(line_plot(&path, "t", "x", "y", &[]).is_err());
        let s = Series { label: "e".into(), points: vec![] };
        assert!(line_plot(&path, "t", "x", "y", &[s]).is_err());
    }

    #[test]
    fn constant_series_is_handled() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.svg");
        let s = Series { label: "flat".into(), points: vec![(1.0, 0.5), (2.0, 0.5)] };
        line_plot(&path, "t", "x", "y", &[s]).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().contains("polyline"));
    }
}
