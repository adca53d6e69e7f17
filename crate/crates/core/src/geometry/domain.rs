//! Multiply connected domains: an outer boundary, holes, and the control arc.

use nalgebra::{Point2, Vector2};
use serde::{Deserialize, Serialize};

use super::collocation::CollocationSet;
use super::curve::JordanCurve;
use crate::error::{Error, Result};

/// Relative tolerance (fraction of the domain diameter) within which a point
/// counts as lying on the boundary.
pub const BOUNDARY_TOL_REL: f64 = 1e-9;

/// One arc of the control region Σ, given as arc-length fractions of a
/// boundary component. `component` 0 is the outer boundary; `k ≥ 1` is hole
/// `k − 1`. The arc runs from fraction `t0` to `t1` in the component's stored
/// orientation and may wrap past 1 (i.e. `t1 < t0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaArc {
    pub component: usize,
    pub t0: f64,
    pub t1: f64,
}

impl SigmaArc {
    /// Fraction of the component's length covered by the arc.
    pub fn coverage(&self) -> f64 {
        if self.t1 > self.t0 {
            self.t1 - self.t0
        } else {
            1.0 - self.t0 + self.t1
        }
    }
}

/// A bounded open set Ω: the interior of `outer` minus the closed interiors
/// of `holes`, with a designated control region Σ on the boundary.
///
/// Serializes as `{"outer": …, "holes": […], "sigma": […]}`; deserialization
/// re-validates every invariant.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "DomainRepr", into = "DomainRepr")]
pub struct Domain {
    outer: JordanCurve,
    holes: Vec<JordanCurve>,
    sigma: Vec<SigmaArc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainRepr {
    outer: JordanCurve,
    #[serde(default)]
    holes: Vec<JordanCurve>,
    #[serde(default)]
    sigma: Vec<SigmaArc>,
}

impl From<Domain> for DomainRepr {
    fn from(d: Domain) -> Self {
        DomainRepr {
            outer: d.outer,
            holes: d.holes,
            sigma: d.sigma,
        }
    }
}

impl TryFrom<DomainRepr> for Domain {
    type Error = Error;

    fn try_from(r: DomainRepr) -> Result<Self> {
        if r.sigma.is_empty() {
            Domain::no_control(r.outer, r.holes)
        } else {
            Domain::new(r.outer, r.holes, r.sigma)
        }
    }
}

/// One quadrature sample on the domain boundary.
#[derive(Debug, Clone, Copy)]
pub struct BoundarySample {
    pub point: Point2<f64>,
    /// Unit normal pointing out of Ω (into the hole on hole boundaries).
    pub normal: Vector2<f64>,
    /// Arc-length quadrature weight.
    pub weight: f64,
    /// Boundary component index (0 = outer).
    pub component: usize,
    /// Arc-length fraction of the component in [0, 1).
    pub s: f64,
    /// Arc length from the start of the sampled piece (local coordinate).
    pub s_local: f64,
}

impl Domain {
    /// Validates and assembles a domain with a nonempty control region.
    pub fn new(outer: JordanCurve, holes: Vec<JordanCurve>, sigma: Vec<SigmaArc>) -> Result<Self> {
        if sigma.is_empty() {
            return Err(Error::InvalidConfig(
                "control region sigma must be nonempty (use Domain::no_control for pure geometry)"
                    .into(),
            ));
        }
        Self::build(outer, holes, sigma)
    }

    /// Domain without a control region, for geometry-only use. Control
    /// synthesis on such a domain fails with a configuration error.
    pub fn no_control(outer: JordanCurve, holes: Vec<JordanCurve>) -> Result<Self> {
        Self::build(outer, holes, Vec::new())
    }

    fn build(outer: JordanCurve, holes: Vec<JordanCurve>, sigma: Vec<SigmaArc>) -> Result<Self> {
        let d = Self {
            outer,
            holes,
            sigma,
        };
        let tol = d.boundary_tolerance();

        for (i, hole) in d.holes.iter().enumerate() {
            if !hole.points().iter().all(|p| d.outer.winding_contains(p))
                || d.outer.distance_to_polyline(hole) <= tol
            {
                return Err(Error::InvalidConfig(format!(
                    "hole {i} is not strictly inside the outer boundary"
                )));
            }
            for (j, other) in d.holes.iter().enumerate().skip(i + 1) {
                if hole.distance_to_polyline(other) <= tol
                    || other.points().iter().any(|p| hole.winding_contains(p))
                    || hole.points().iter().any(|p| other.winding_contains(p))
                {
                    return Err(Error::InvalidConfig(format!(
                        "holes {i} and {j} overlap or touch"
                    )));
                }
            }
        }

        let n_components = 1 + d.holes.len();
        for arc in &d.sigma {
            if arc.component >= n_components {
                return Err(Error::InvalidConfig(format!(
                    "sigma arc references component {} of {n_components}",
                    arc.component
                )));
            }
            let in_range = |t: f64| (0.0..1.0).contains(&t);
            if !in_range(arc.t0) || !in_range(arc.t1) || arc.t0 == arc.t1 {
                return Err(Error::InvalidConfig(format!(
                    "sigma arc fractions must lie in [0,1) and differ: t0={}, t1={}",
                    arc.t0, arc.t1
                )));
            }
        }
        // Arcs on the same component must not overlap, and Σ must leave some
        // boundary uncontrolled so the homogeneous condition has support.
        for component in 0..n_components {
            let intervals = d.sigma_intervals(component);
            for w in intervals.windows(2) {
                if w[0].1 > w[1].0 {
                    return Err(Error::InvalidConfig(format!(
                        "sigma arcs overlap on component {component}"
                    )));
                }
            }
        }
        let covered: f64 = d
            .sigma
            .iter()
            .map(|a| a.coverage() * d.component_length(a.component))
            .sum();
        let total: f64 = (0..n_components).map(|c| d.component_length(c)).sum();
        if covered >= total * (1.0 - 1e-9) {
            return Err(Error::InvalidConfig(
                "sigma covers the entire boundary; its complement must be nonempty".into(),
            ));
        }
        Ok(d)
    }

    pub fn outer(&self) -> &JordanCurve {
        &self.outer
    }

    pub fn holes(&self) -> &[JordanCurve] {
        &self.holes
    }

    pub fn sigma(&self) -> &[SigmaArc] {
        &self.sigma
    }

    pub fn n_components(&self) -> usize {
        1 + self.holes.len()
    }

    /// Boundary component `idx` (0 = outer, `k ≥ 1` = hole `k − 1`).
    pub fn component(&self, idx: usize) -> &JordanCurve {
        if idx == 0 {
            &self.outer
        } else {
            &self.holes[idx - 1]
        }
    }

    /// Diagonal of the outer bounding box; the length scale for tolerances.
    pub fn diameter(&self) -> f64 {
        let (lo, hi) = self.outer.bounding_box();
        (hi - lo).norm()
    }

    pub fn boundary_tolerance(&self) -> f64 {
        BOUNDARY_TOL_REL * self.diameter()
    }

    /// Distance from `p` to the nearest boundary component.
    pub fn min_boundary_distance(&self, p: &Point2<f64>) -> f64 {
        let mut best = self.outer.distance_to_point(p);
        for hole in &self.holes {
            best = best.min(hole.distance_to_point(p));
        }
        best
    }

    /// Minimum distance from a curve to the boundary.
    pub fn curve_clearance(&self, curve: &JordanCurve) -> f64 {
        let mut best = curve.distance_to_polyline(&self.outer);
        for hole in &self.holes {
            best = best.min(curve.distance_to_polyline(hole));
        }
        best
    }

    /// True iff `p` lies in Ω. Errors when `p` is within the boundary
    /// tolerance of any component.
    pub fn contains(&self, p: &Point2<f64>) -> Result<bool> {
        let tol = self.boundary_tolerance();
        if self.min_boundary_distance(p) < tol {
            return Err(Error::OnBoundary {
                x: p.x,
                y: p.y,
                tol,
            });
        }
        Ok(self.inside_unchecked(p))
    }

    /// `contains` collapsed to a bool: boundary-adjacent points count as
    /// outside. Used for clipping decisions.
    pub fn strictly_inside(&self, p: &Point2<f64>) -> bool {
        matches!(self.contains(p), Ok(true))
    }

    fn inside_unchecked(&self, p: &Point2<f64>) -> bool {
        self.outer.winding_contains(p) && !self.holes.iter().any(|h| h.winding_contains(p))
    }

    /// Indices of holes enclosed by `curve` (its homotopy signature in Ω).
    pub fn enclosed_holes(&self, curve: &JordanCurve) -> Result<Vec<usize>> {
        for p in curve.points() {
            match self.contains(p) {
                Ok(true) => {}
                _ => return Err(Error::CurveNotInDomain),
            }
        }
        let mut enclosed = Vec::new();
        for (i, hole) in self.holes.iter().enumerate() {
            let rep = hole_representative(hole);
            if curve.winding_contains(&rep) {
                enclosed.push(i);
            }
        }
        Ok(enclosed)
    }

    pub fn component_length(&self, idx: usize) -> f64 {
        self.component(idx).total_length()
    }

    /// Position and outward-of-Ω normal at arc-length fraction `t` of a
    /// component. The normal is the containing segment's normal, so it is
    /// piecewise constant along the polyline.
    pub fn boundary_point(&self, component: usize, t: f64) -> (Point2<f64>, Vector2<f64>) {
        let curve = self.component(component);
        let cum = curve.cumulative_lengths();
        let total = *cum.last().expect("nonempty");
        let s = (t.rem_euclid(1.0)) * total;
        let n = curve.len();
        let j = match cum.binary_search_by(|c| c.partial_cmp(&s).expect("finite")) {
            Ok(j) => j.min(n - 1),
            Err(j) => j - 1,
        };
        let a = curve.points()[j];
        let b = curve.point(j + 1);
        let frac = (s - cum[j]) / (cum[j + 1] - cum[j]);
        let point = a + (b - a) * frac;
        let e = (b - a).normalize();
        let mut normal = Vector2::new(e.y, -e.x);
        if component != 0 {
            // Hole boundaries are CCW, so their right normal points into Ω;
            // flip it to point out of Ω (into the hole).
            normal = -normal;
        }
        (point, normal)
    }

    /// Sigma arcs of one component as disjoint plain intervals in [0, 1),
    /// sorted by start (wrapping arcs are split in two).
    fn sigma_intervals(&self, component: usize) -> Vec<(f64, f64)> {
        let mut intervals = Vec::new();
        for arc in self.sigma.iter().filter(|a| a.component == component) {
            if arc.t1 > arc.t0 {
                intervals.push((arc.t0, arc.t1));
            } else {
                intervals.push((arc.t0, 1.0));
                if arc.t1 > 0.0 {
                    intervals.push((0.0, arc.t1));
                }
            }
        }
        intervals.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        intervals
    }

    /// Samples every sigma arc at `per_arc` stations uniform in arc length,
    /// endpoints included, with trapezoid weights. `s_local` is the arc
    /// length from the arc's start, so traces plot continuously even when
    /// the arc wraps past fraction 1.
    pub fn sample_sigma(&self, per_arc: usize) -> Vec<BoundarySample> {
        let per_arc = per_arc.max(2);
        let mut out = Vec::new();
        for arc in &self.sigma {
            let total = self.component_length(arc.component);
            let len = arc.coverage() * total;
            let ds = len / (per_arc - 1) as f64;
            for j in 0..per_arc {
                let frac = arc.coverage() * j as f64 / (per_arc - 1) as f64;
                let t = (arc.t0 + frac).rem_euclid(1.0);
                let (point, normal) = self.boundary_point(arc.component, t);
                let weight = if j == 0 || j == per_arc - 1 {
                    0.5 * ds
                } else {
                    ds
                };
                out.push(BoundarySample {
                    point,
                    normal,
                    weight,
                    component: arc.component,
                    s: t,
                    s_local: frac * total,
                });
            }
        }
        out
    }

    /// Samples the uncontrolled boundary ∂Ω∖Σ at spacing at most `spacing`.
    /// Pieces bordering a sigma arc include their endpoints (where the
    /// homogeneous condition meets the control); full loops are periodic.
    pub fn sample_complement(&self, spacing: f64) -> Vec<BoundarySample> {
        let mut out = Vec::new();
        for component in 0..self.n_components() {
            let total = self.component_length(component);
            let intervals = self.sigma_intervals(component);
            if intervals.is_empty() {
                // Whole component is uncontrolled: periodic uniform sampling.
                let n = ((total / spacing).ceil() as usize).max(16);
                let ds = total / n as f64;
                for j in 0..n {
                    let t = j as f64 / n as f64;
                    let (point, normal) = self.boundary_point(component, t);
                    out.push(BoundarySample {
                        point,
                        normal,
                        weight: ds,
                        component,
                        s: t,
                        s_local: t * total,
                    });
                }
                continue;
            }
            // Gaps between consecutive sigma intervals, wrapping at 1.
            let mut gaps = Vec::new();
            for w in 0..intervals.len() {
                let end = intervals[w].1;
                let next_start = if w + 1 < intervals.len() {
                    intervals[w + 1].0
                } else {
                    intervals[0].0 + 1.0
                };
                if next_start > end + 1e-12 {
                    gaps.push((end, next_start));
                }
            }
            for (u0, u1) in gaps {
                let len = (u1 - u0) * total;
                let n = ((len / spacing).ceil() as usize + 1).max(2);
                let ds = len / (n - 1) as f64;
                for j in 0..n {
                    let t = (u0 + (u1 - u0) * j as f64 / (n - 1) as f64).rem_euclid(1.0);
                    let (point, normal) = self.boundary_point(component, t);
                    let weight = if j == 0 || j == n - 1 { 0.5 * ds } else { ds };
                    out.push(BoundarySample {
                        point,
                        normal,
                        weight,
                        component,
                        s: t,
                        s_local: (t - u0).rem_euclid(1.0) * total,
                    });
                }
            }
        }
        out
    }

    /// High-order quadrature over the whole boundary: 6-point Gauss–Legendre
    /// on every polyline segment with outward-of-Ω normals. Exact to machine
    /// precision for fields analytic on each segment, which makes the net
    /// flux of a singularity-free field vanish to ~1e-15.
    pub fn boundary_quadrature(&self) -> CollocationSet {
        const NODES: [f64; 6] = [
            -0.932_469_514_203_152,
            -0.661_209_386_466_264_5,
            -0.238_619_186_083_196_9,
            0.238_619_186_083_196_9,
            0.661_209_386_466_264_5,
            0.932_469_514_203_152,
        ];
        const WEIGHTS: [f64; 6] = [
            0.171_324_492_379_170_3,
            0.360_761_573_048_138_6,
            0.467_913_934_572_691_1,
            0.467_913_934_572_691_1,
            0.360_761_573_048_138_6,
            0.171_324_492_379_170_3,
        ];
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut normals = Vec::new();
        for component in 0..self.n_components() {
            let curve = self.component(component);
            let flip = if component == 0 { 1.0 } else { -1.0 };
            for i in 0..curve.len() {
                let a = curve.points()[i];
                let b = curve.point(i + 1);
                let e = b - a;
                let len = e.norm();
                let mid = a + e * 0.5;
                let normal = Vector2::new(e.y, -e.x) / len * flip;
                for (x, w) in NODES.iter().zip(WEIGHTS) {
                    points.push(mid + e * (0.5 * x));
                    weights.push(w * len * 0.5);
                    normals.push(normal);
                }
            }
        }
        CollocationSet::new(points, weights, Some(normals)).expect("construction is valid")
    }
}

/// A point in the open interior of a hole, used as its homotopy marker.
fn hole_representative(hole: &JordanCurve) -> Point2<f64> {
    let centroid = hole.centroid();
    if hole.winding_contains(&centroid) {
        return centroid;
    }
    // Non-convex hole with exterior centroid: probe midpoints of node pairs.
    let m = hole.len();
    for i in 0..m {
        let candidate = nalgebra::center(&hole.points()[i], &hole.point(i + m / 2));
        if hole.winding_contains(&candidate) {
            return candidate;
        }
    }
    // A valid Jordan polygon always yields a probe above; keep the centroid
    // as a deterministic fallback.
    centroid
}
