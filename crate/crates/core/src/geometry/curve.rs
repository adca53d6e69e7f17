//! Discrete Jordan curves: closed simple polylines with quasi-uniform sampling.

use std::f64::consts::PI;

use nalgebra::{Point2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fewest samples a curve may carry.
pub const MIN_SAMPLES: usize = 16;

/// Largest allowed ratio between the longest and the shortest edge.
pub const MAX_SPACING_RATIO: f64 = 10.0;

/// A closed, simple, positively oriented polyline in the plane.
///
/// `points[i]` connects to `points[i + 1]`, and the last point closes back to
/// the first. Construction validates the shape, so a value of this type is
/// always usable: at least [`MIN_SAMPLES`] nodes, counter-clockwise, free of
/// self-intersections, with edge lengths within a factor of
/// [`MAX_SPACING_RATIO`] of each other.
///
/// Serializes as `{"points": [[x, y], ...]}`; deserialization re-validates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CurveRepr", into = "CurveRepr")]
pub struct JordanCurve {
    points: Vec<Point2<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CurveRepr {
    points: Vec<[f64; 2]>,
}

impl From<JordanCurve> for CurveRepr {
    fn from(c: JordanCurve) -> Self {
        CurveRepr {
            points: c.points.iter().map(|p| [p.x, p.y]).collect(),
        }
    }
}

impl TryFrom<CurveRepr> for JordanCurve {
    type Error = Error;

    fn try_from(r: CurveRepr) -> Result<Self> {
        JordanCurve::new(r.points.into_iter().map(|[x, y]| Point2::new(x, y)).collect())
    }
}

impl JordanCurve {
    /// Validates and wraps a point list. See the type docs for the rules.
    pub fn new(points: Vec<Point2<f64>>) -> Result<Self> {
        let m = points.len();
        if m < MIN_SAMPLES {
            return Err(Error::InvalidCurve(format!(
                "need at least {MIN_SAMPLES} points, got {m}"
            )));
        }
        if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::InvalidCurve("non-finite coordinate".into()));
        }
        let mut min_edge = f64::INFINITY;
        let mut max_edge = 0.0_f64;
        for i in 0..m {
            let len = (points[(i + 1) % m] - points[i]).norm();
            min_edge = min_edge.min(len);
            max_edge = max_edge.max(len);
        }
        if min_edge <= 0.0 {
            return Err(Error::InvalidCurve("repeated consecutive point".into()));
        }
        if max_edge / min_edge > MAX_SPACING_RATIO * (1.0 + 1e-12) {
            return Err(Error::InvalidCurve(format!(
                "edge length ratio {:.3} exceeds {MAX_SPACING_RATIO} (quasi-uniform sampling required)",
                max_edge / min_edge
            )));
        }
        let area = shoelace_area(&points);
        if area <= 0.0 {
            return Err(Error::InvalidCurve(format!(
                "signed area {area:.3e} not positive; points must run counter-clockwise"
            )));
        }
        if let Some((i, j)) = first_self_intersection(&points) {
            return Err(Error::InvalidCurve(format!(
                "segments {i} and {j} intersect; curve must be simple"
            )));
        }
        Ok(Self { points })
    }

    /// Regular `m`-gon sampling of a circle, radially corrected so that the
    /// polygon area equals the analytic `π r²` to floating-point rounding.
    /// Vertices sit a relative `(2π/m)²/12` outside the nominal radius.
    pub fn circle(center: Point2<f64>, radius: f64, m: usize) -> Result<Self> {
        Self::ellipse(center, radius, radius, m)
    }

    /// Ellipse with semi-axes `a`, `b`, sampled at `m` uniform parameter
    /// angles with the same area-true radial correction as [`Self::circle`].
    pub fn ellipse(center: Point2<f64>, a: f64, b: f64, m: usize) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::InvalidCurve(
                "ellipse semi-axes must be positive".into(),
            ));
        }
        if m < MIN_SAMPLES {
            return Err(Error::InvalidCurve(format!(
                "need at least {MIN_SAMPLES} samples, got {m}"
            )));
        }
        // The inscribed polygon encloses π a b · sin(2π/m)/(2π/m); stretch by
        // the square root of the deficit so the shoelace area is exact.
        let step = 2.0 * PI / m as f64;
        let scale = (step / step.sin()).sqrt();
        let points = (0..m)
            .map(|k| {
                let theta = step * k as f64;
                center + Vector2::new(a * scale * theta.cos(), b * scale * theta.sin())
            })
            .collect();
        Self::new(points)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false // a valid curve always has at least MIN_SAMPLES points
    }

    pub fn points(&self) -> &[Point2<f64>] {
        &self.points
    }

    /// Node `i` with cyclic indexing.
    pub fn point(&self, i: usize) -> Point2<f64> {
        self.points[i % self.points.len()]
    }

    /// Shoelace area; positive because curves are counter-clockwise.
    pub fn signed_area(&self) -> f64 {
        shoelace_area(&self.points)
    }

    /// Perimeter of the polyline.
    pub fn total_length(&self) -> f64 {
        (0..self.points.len())
            .map(|i| (self.point(i + 1) - self.points[i]).norm())
            .sum()
    }

    /// Ratio of the longest to the shortest edge.
    pub fn spacing_ratio(&self) -> f64 {
        let mut min_edge = f64::INFINITY;
        let mut max_edge = 0.0_f64;
        for i in 0..self.points.len() {
            let len = (self.point(i + 1) - self.points[i]).norm();
            min_edge = min_edge.min(len);
            max_edge = max_edge.max(len);
        }
        max_edge / min_edge
    }

    /// Cumulative arc length: `m + 1` entries from `0` to the perimeter.
    pub fn cumulative_lengths(&self) -> Vec<f64> {
        let m = self.points.len();
        let mut cum = Vec::with_capacity(m + 1);
        cum.push(0.0);
        for i in 0..m {
            let len = (self.point(i + 1) - self.points[i]).norm();
            cum.push(cum[i] + len);
        }
        cum
    }

    /// Arc-length weight of each node: half the sum of its two edges.
    pub fn node_weights(&self) -> Vec<f64> {
        let m = self.points.len();
        (0..m)
            .map(|i| {
                let prev = (self.points[i] - self.point(i + m - 1)).norm();
                let next = (self.point(i + 1) - self.points[i]).norm();
                0.5 * (prev + next)
            })
            .collect()
    }

    /// Outward unit normals at the nodes: right-hand normal of the
    /// counter-clockwise tangent, estimated by central differences.
    pub fn outward_normals(&self) -> Vec<Vector2<f64>> {
        let m = self.points.len();
        (0..m)
            .map(|i| {
                let t = self.point(i + 1) - self.point(i + m - 1);
                let n = Vector2::new(t.y, -t.x);
                let len = n.norm();
                if len > 1e-300 {
                    n / len
                } else {
                    // Degenerate central difference (spike); fall back to the
                    // forward edge normal, which is nonzero for valid curves.
                    let e = self.point(i + 1) - self.points[i];
                    Vector2::new(e.y, -e.x) / e.norm()
                }
            })
            .collect()
    }

    /// The same polyline shifted rigidly by `v` (validity is preserved).
    pub fn translated(&self, v: Vector2<f64>) -> Self {
        Self {
            points: self.points.iter().map(|p| p + v).collect(),
        }
    }

    /// Point order reversed (clockwise). Not a valid `JordanCurve`; exposed
    /// for orientation-sensitive diagnostics such as the shoelace sign test.
    pub fn reversed_points(&self) -> Vec<Point2<f64>> {
        let mut pts = self.points.clone();
        pts.reverse();
        pts
    }

    /// Area centroid of the enclosed polygon.
    pub fn centroid(&self) -> Point2<f64> {
        let origin = self.points[0];
        let mut twice_area = 0.0;
        let mut cx = 0.0;
        let mut cy = 0.0;
        for i in 0..self.points.len() {
            let p = self.points[i] - origin;
            let q = self.point(i + 1) - origin;
            let cross = p.x * q.y - p.y * q.x;
            twice_area += cross;
            cx += (p.x + q.x) * cross;
            cy += (p.y + q.y) * cross;
        }
        origin + Vector2::new(cx, cy) / (3.0 * twice_area)
    }

    /// Axis-aligned bounding box `(lower, upper)`.
    pub fn bounding_box(&self) -> (Point2<f64>, Point2<f64>) {
        let mut lo = self.points[0];
        let mut hi = self.points[0];
        for p in &self.points {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (lo, hi)
    }

    /// Re-sample at `m` stations uniform in arc length, starting from the
    /// current first point. Stations are linear interpolations on the
    /// existing polyline, so the new curve stays within one chord sag of the
    /// old one.
    pub fn resample_by_arclength(&self, m: usize) -> Result<Self> {
        let cum = self.cumulative_lengths();
        let total = *cum.last().expect("nonempty");
        let n = self.points.len();
        let points = (0..m)
            .map(|k| {
                let s = total * k as f64 / m as f64;
                // Find the edge containing s: cum[j] <= s < cum[j + 1].
                let j = match cum.binary_search_by(|c| c.partial_cmp(&s).expect("finite")) {
                    Ok(j) => j.min(n - 1),
                    Err(j) => j - 1,
                };
                let t = (s - cum[j]) / (cum[j + 1] - cum[j]);
                let a = self.points[j];
                let b = self.point(j + 1);
                a + (b - a) * t
            })
            .collect();
        Self::new(points)
    }

    /// True when `p` lies strictly inside the enclosed polygon (winding
    /// number test). Points on the boundary are not handled specially; keep
    /// them out with a distance check first.
    pub fn winding_contains(&self, p: &Point2<f64>) -> bool {
        let mut winding = 0i32;
        for i in 0..self.points.len() {
            let a = self.points[i];
            let b = self.point(i + 1);
            if a.y <= p.y {
                if b.y > p.y && orient(&a, &b, p) > 0.0 {
                    winding += 1;
                }
            } else if b.y <= p.y && orient(&a, &b, p) < 0.0 {
                winding -= 1;
            }
        }
        winding != 0
    }

    /// Distance from `p` to the polyline (zero on the boundary itself).
    pub fn distance_to_point(&self, p: &Point2<f64>) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.points.len() {
            let d = point_segment_distance(p, &self.points[i], &self.point(i + 1));
            best = best.min(d);
        }
        best
    }

    /// Minimum distance between the segment `[a, b]` and this polyline.
    pub fn distance_to_segment(&self, a: &Point2<f64>, b: &Point2<f64>) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.points.len() {
            let d = segment_segment_distance(a, b, &self.points[i], &self.point(i + 1));
            best = best.min(d);
        }
        best
    }

    /// Minimum distance between this polyline and another.
    pub fn distance_to_polyline(&self, other: &JordanCurve) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..other.points.len() {
            let d = self.distance_to_segment(&other.points[i], &other.point(i + 1));
            best = best.min(d);
        }
        best
    }
}

/// Signed polygon area of an arbitrary closed point list (positive for
/// counter-clockwise orientation). Works on raw point slices so that
/// orientation experiments (e.g. reversed curves) stay expressible.
pub fn shoelace_area(points: &[Point2<f64>]) -> f64 {
    if points.len() < 3 {
        return 0.0;
    }
    let origin = points[0];
    let mut twice = 0.0;
    for i in 0..points.len() {
        let p = points[i] - origin;
        let q = points[(i + 1) % points.len()] - origin;
        twice += p.x * q.y - p.y * q.x;
    }
    0.5 * twice
}

/// Symmetric discrete Hausdorff distance: the larger of the two directed
/// distances, where each direction measures curve nodes against the other
/// curve's full polyline (segment projection).
pub fn hausdorff_distance(a: &JordanCurve, b: &JordanCurve) -> f64 {
    directed_hausdorff(a, b).max(directed_hausdorff(b, a))
}

fn directed_hausdorff(a: &JordanCurve, b: &JordanCurve) -> f64 {
    a.points()
        .iter()
        .map(|p| b.distance_to_point(p))
        .fold(0.0, f64::max)
}

/// Discrete `C^k` distance between two parameterized curves with the same
/// sample count: the minimum over cyclic shifts and orientation reversal of
/// the maximum over nodes of the point gap and its centered finite-difference
/// derivatives up to order `k` (parameter step `1/m`).
pub fn parametric_distance(a: &JordanCurve, b: &JordanCurve, k: usize) -> Result<f64> {
    let m = a.len();
    if b.len() != m {
        return Err(Error::SampleCountMismatch { a: m, b: b.len() });
    }
    let h = 1.0 / m as f64;
    let mut best = f64::INFINITY;
    let mut gaps: Vec<Vector2<f64>> = vec![Vector2::zeros(); m];
    let mut deriv: Vec<Vector2<f64>> = vec![Vector2::zeros(); m];
    for reversed in [false, true] {
        for shift in 0..m {
            for (i, g) in gaps.iter_mut().enumerate() {
                let j = if reversed { (m - i) % m } else { i };
                *g = a.points()[i] - b.points()[(j + shift) % m];
            }
            let mut norm = gaps.iter().map(Vector2::norm).fold(0.0, f64::max);
            if norm < best || k > 0 {
                let mut current = gaps.clone();
                for _ in 0..k {
                    for i in 0..m {
                        deriv[i] = (current[(i + 1) % m] - current[(i + m - 1) % m]) / (2.0 * h);
                    }
                    std::mem::swap(&mut current, &mut deriv);
                    norm = norm.max(current.iter().map(Vector2::norm).fold(0.0, f64::max));
                }
            }
            best = best.min(norm);
        }
    }
    Ok(best)
}

pub(crate) fn orient(a: &Point2<f64>, b: &Point2<f64>, c: &Point2<f64>) -> f64 {
    (b - a).perp(&(c - a))
}

pub(crate) fn point_segment_distance(p: &Point2<f64>, a: &Point2<f64>, b: &Point2<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

pub(crate) fn segment_segment_distance(
    a1: &Point2<f64>,
    a2: &Point2<f64>,
    b1: &Point2<f64>,
    b2: &Point2<f64>,
) -> f64 {
    if segments_touch(a1, a2, b1, b2) {
        return 0.0;
    }
    point_segment_distance(a1, b1, b2)
        .min(point_segment_distance(a2, b1, b2))
        .min(point_segment_distance(b1, a1, a2))
        .min(point_segment_distance(b2, a1, a2))
}

/// True when the closed segments `[p1, p2]` and `[q1, q2]` share any point,
/// including endpoint touches and collinear overlap.
pub(crate) fn segments_touch(
    p1: &Point2<f64>,
    p2: &Point2<f64>,
    q1: &Point2<f64>,
    q2: &Point2<f64>,
) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && in_bbox(q1, q2, p1))
        || (d2 == 0.0 && in_bbox(q1, q2, p2))
        || (d3 == 0.0 && in_bbox(p1, p2, q1))
        || (d4 == 0.0 && in_bbox(p1, p2, q2))
}

fn in_bbox(a: &Point2<f64>, b: &Point2<f64>, c: &Point2<f64>) -> bool {
    c.x >= a.x.min(b.x) && c.x <= a.x.max(b.x) && c.y >= a.y.min(b.y) && c.y <= a.y.max(b.y)
}

fn first_self_intersection(points: &[Point2<f64>]) -> Option<(usize, usize)> {
    let m = points.len();
    for i in 0..m {
        for j in (i + 1)..m {
            // Skip pairs sharing an endpoint: (i, i + 1) and the closing wrap.
            if j == i + 1 || (i == 0 && j == m - 1) {
                continue;
            }
            if segments_touch(&points[i], &points[(i + 1) % m], &points[j], &points[(j + 1) % m]) {
                return Some((i, j));
            }
        }
    }
    None
}
