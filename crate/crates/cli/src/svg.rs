//! Deterministic SVG rendering of ROC/FROC curves with a sidecar CSV of
//! the exact point list.

use cxr_core::curve::{CurveKind, CurveSeries};
use std::fmt::Write as _;
use std::path::Path;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 56.0;

fn map_point(x: f64, y: f64, x_max: f64) -> (f64, f64) {
    let px = MARGIN + x / x_max * (WIDTH - 2.0 * MARGIN);
    let py = HEIGHT - MARGIN - y * (HEIGHT - 2.0 * MARGIN);
    (px, py)
}

fn polyline(points: &[(f64, f64)], x_max: f64, style: &str) -> String {
    let coords: Vec<String> = points
        .iter()
        .map(|&(x, y)| {
            let (px, py) = map_point(x, y, x_max);
            format!("{px:.2},{py:.2}")
        })
        .collect();
    format!(
        "  <polyline fill=\"none\" {style} points=\"{}\"/>\n",
        coords.join(" ")
    )
}

/// Renders a standalone SVG with axes, the main polyline, and optional
/// percentile-band polylines, plus a `.csv` sidecar holding the numeric
/// points verbatim.
pub fn emit_curve_svg(
    curve: &CurveSeries,
    band: Option<(&CurveSeries, &CurveSeries)>,
    path: &Path,
) -> std::io::Result<()> {
    let x_max = match curve.kind {
        CurveKind::Roc => 1.0,
        CurveKind::Froc => curve
            .points
            .iter()
            .map(|p| p.0)
            .fold(1.0f64, f64::max),
    };
    let (x_label, y_label) = match curve.kind {
        CurveKind::Roc => ("False positive rate", "True positive rate"),
        CurveKind::Froc => ("False positives per image", "Sensitivity"),
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(svg, "  <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    // axes
    let (x0, y0) = map_point(0.0, 0.0, x_max);
    let (x1, _) = map_point(x_max, 0.0, x_max);
    let (_, y1) = map_point(0.0, 1.0, x_max);
    let _ = writeln!(
        svg,
        "  <line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x1:.2}\" y2=\"{y0:.2}\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        svg,
        "  <line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x0:.2}\" y2=\"{y1:.2}\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        svg,
        "  <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"14\">{x_label}</text>",
        WIDTH / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        svg,
        "  <text x=\"14\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 14 {:.2})\">{y_label}</text>",
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    if !curve.label.is_empty() {
        let _ = writeln!(
            svg,
            "  <text x=\"{:.2}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>",
            WIDTH / 2.0,
            curve.label
        );
    }
    if let Some((lo, hi)) = band {
        svg.push_str(&polyline(
            &lo.points,
            x_max,
            "stroke=\"red\" stroke-dasharray=\"6 4\"",
        ));
        svg.push_str(&polyline(
            &hi.points,
            x_max,
            "stroke=\"red\" stroke-dasharray=\"6 4\"",
        ));
    }
    svg.push_str(&polyline(&curve.points, x_max, "stroke=\"blue\" stroke-width=\"2\""));
    svg.push_str("</svg>\n");
    std::fs::write(path, svg)?;

    let mut csv = String::from("x,y\n");
    for &(x, y) in &curve.points {
        let _ = writeln!(csv, "{x},{y}");
    }
    std::fs::write(path.with_extension("csv"), csv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_csv_matches_points() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("roc.svg");
        let curve = CurveSeries::new(
            CurveKind::Roc,
            "perfect",
            vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)],
        );
        emit_curve_svg(&curve, None, &path).unwrap();
        let csv = std::fs::read_to_string(path.with_extension("csv")).unwrap();
        assert_eq!(csv, "x,y\n0,0\n0,1\n1,1\n");
        let svg = std::fs::read_to_string(&path).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
    }

    #[test]
    fn band_adds_two_polylines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("roc.svg");
        let mk = |d: f64| {
            CurveSeries::new(
                CurveKind::Roc,
                "",
                vec![(0.0, 0.0), (0.5, (0.5 + d).clamp(0.0, 1.0)), (1.0, 1.0)],
            )
        };
        let curve = mk(0.0);
        let lo = mk(-0.1);
        let hi = mk(0.1);
        emit_curve_svg(&curve, Some((&lo, &hi)), &path).unwrap();
        let svg = std::fs::read_to_string(&path).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 3);
    }
}
