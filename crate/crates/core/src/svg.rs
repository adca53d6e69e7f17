//! Minimal SVG frame rendering: the domain with its control region
//! highlighted, the current curve, and the target. Pure string assembly,
//! bit-stable across runs.

use nalgebra::Point2;

use crate::geometry::{Domain, JordanCurve};

const CANVAS: f64 = 800.0;
const MARGIN_FRAC: f64 = 0.06;

struct Mapper {
    scale: f64,
    x0: f64,
    y1: f64,
}

impl Mapper {
    fn new(domain: &Domain) -> Self {
        let pts = domain.outer().points();
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for p in pts {
            x0 = x0.min(p.x);
            x1 = x1.max(p.x);
            y0 = y0.min(p.y);
            y1 = y1.max(p.y);
        }
        let span = (x1 - x0).max(y1 - y0);
        let margin = span * MARGIN_FRAC;
        // Center the square window on the bounding box.
        let cx = 0.5 * (x0 + x1);
        let cy = 0.5 * (y0 + y1);
        let half = 0.5 * span + margin;
        Self {
            scale: CANVAS / (2.0 * half),
            x0: cx - half,
            y1: cy + half,
        }
    }

    fn map(&self, p: &Point2<f64>) -> (f64, f64) {
        ((p.x - self.x0) * self.scale, (self.y1 - p.y) * self.scale)
    }
}

fn polygon_points(mapper: &Mapper, pts: &[Point2<f64>]) -> String {
    let mut out = String::with_capacity(pts.len() * 14);
    for (i, p) in pts.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let (x, y) = mapper.map(p);
        out.push_str(&format!("{x:.2},{y:.2}"));
    }
    out
}

fn closed_path(mapper: &Mapper, curve: &JordanCurve, style: &str) -> String {
    format!(
        "  <polygon points=\"{}\" {} />\n",
        polygon_points(mapper, curve.points()),
        style
    )
}

/// Renders one frame: walls in dark gray, holes filled, the control
/// region Σ as a thick amber band on the boundary, the target dashed, the
/// current curve solid blue, and the time stamp top left.
pub fn render_frame(domain: &Domain, current: &JordanCurve, target: &JordanCurve, t: f64) -> String {
    let mapper = Mapper::new(domain);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{c:.0}\" height=\"{c:.0}\" viewBox=\"0 0 {c:.0} {c:.0}\">\n",
        c = CANVAS
    );
    svg.push_str("  <rect width=\"100%\" height=\"100%\" fill=\"white\" />\n");
    svg.push_str(&closed_path(
        &mapper,
        domain.outer(),
        "fill=\"none\" stroke=\"#333333\" stroke-width=\"2\"",
    ));
    for hole in domain.holes() {
        svg.push_str(&closed_path(
            &mapper,
            hole,
            "fill=\"#dddddd\" stroke=\"#333333\" stroke-width=\"2\"",
        ));
    }
    // Σ on top of the walls, one polyline per arc (sample_sigma returns
    // the same count for every arc, concatenated in arc order).
    let samples = domain.sample_sigma(192);
    let per_arc = samples.len() / domain.sigma().len().max(1);
    for arc_idx in 0..domain.sigma().len() {
        let arc_samples = &samples[arc_idx * per_arc..(arc_idx + 1) * per_arc];
        let pts: Vec<Point2<f64>> = arc_samples.iter().map(|s| s.point).collect();
        svg.push_str(&format!(
            "  <polyline points=\"{}\" fill=\"none\" stroke=\"#e8a020\" stroke-width=\"6\" stroke-linecap=\"round\" />\n",
            polygon_points(&mapper, &pts)
        ));
    }
    svg.push_str(&closed_path(
        &mapper,
        target,
        "fill=\"none\" stroke=\"#888888\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\"",
    ));
    svg.push_str(&closed_path(
        &mapper,
        current,
        "fill=\"#4477cc22\" stroke=\"#2255aa\" stroke-width=\"2.5\"",
    ));
    svg.push_str(&format!(
        "  <text x=\"16\" y=\"30\" font-family=\"monospace\" font-size=\"20\" fill=\"#333333\">t = {t:.4}</text>\n"
    ));
    svg.push_str("</svg>\n");
    svg
}
