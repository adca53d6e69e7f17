//! Collocation point sets used as approximation targets around a curve.

use nalgebra::{Point2, Vector2};

use super::curve::JordanCurve;
use super::domain::Domain;
use crate::error::{Error, Result};

/// Signed offsets of the five tube layers, as multiples of the half-width δ.
/// Layer 0 lies on the curve itself and always comes first in storage.
pub const TUBE_LAYER_OFFSETS: [f64; 5] = [0.0, 0.5, -0.5, 1.0, -1.0];

/// Share of the tube thickness attributed to each layer (the three inner
/// layers each represent a band of width δ/2, the two rim layers δ/4).
const LAYER_THICKNESS: [f64; 5] = [0.5, 0.5, 0.5, 0.25, 0.25];

/// Minimum fraction of curve nodes whose tube columns must survive boundary
/// clipping intact; below this the construction is rejected.
pub const MIN_KEPT_FRACTION: f64 = 0.5;

/// Weighted point set, optionally with unit normals, at which fields are
/// matched or measured.
#[derive(Debug, Clone)]
pub struct CollocationSet {
    points: Vec<Point2<f64>>,
    weights: Vec<f64>,
    normals: Option<Vec<Vector2<f64>>>,
}

impl CollocationSet {
    pub fn new(
        points: Vec<Point2<f64>>,
        weights: Vec<f64>,
        normals: Option<Vec<Vector2<f64>>>,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::DegenerateProblem("empty collocation set".into()));
        }
        if points.len() != weights.len() {
            return Err(Error::SampleCountMismatch {
                a: points.len(),
                b: weights.len(),
            });
        }
        if let Some(ref n) = normals {
            if n.len() != points.len() {
                return Err(Error::SampleCountMismatch {
                    a: points.len(),
                    b: n.len(),
                });
            }
            if n.iter().any(|v| (v.norm() - 1.0).abs() > 1e-9) {
                return Err(Error::DegenerateProblem(
                    "collocation normals must be unit vectors".into(),
                ));
            }
        }
        if !weights.iter().all(|w| w.is_finite() && *w > 0.0) {
            return Err(Error::DegenerateProblem(
                "collocation weights must be positive and finite".into(),
            ));
        }
        if !points.iter().all(|p| p.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::DegenerateProblem(
                "collocation points must be finite".into(),
            ));
        }
        Ok(Self {
            points,
            weights,
            normals,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point2<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn normals(&self) -> Option<&[Vector2<f64>]> {
        self.normals.as_deref()
    }

    /// Total quadrature mass.
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Builds the five-layer collocation tube of half-width `delta` around
/// `curve`. For each curve node the column holds the on-curve point and the
/// normal offsets ±δ/2 and ±δ, stored layer-major so the first `curve.len()`
/// points are the curve nodes themselves. Weights are the node arc-length
/// weight times the layer's thickness share, so the total weight is the tube
/// area `2δ·length` up to curvature corrections.
///
/// With a `domain`, points that leave Ω are dropped; a node whose column
/// loses any point counts as damaged, and more than half damaged nodes is an
/// error. Without a domain no clipping occurs.
pub fn tube(curve: &JordanCurve, delta: f64, domain: Option<&Domain>) -> Result<CollocationSet> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::OutOfRange(format!(
            "tube half-width must be positive, got {delta}"
        )));
    }
    let m = curve.len();
    let normals = curve.outward_normals();
    let ds = curve.node_weights();

    let mut points = Vec::with_capacity(5 * m);
    let mut weights = Vec::with_capacity(5 * m);
    let mut out_normals = Vec::with_capacity(5 * m);
    let mut damaged = vec![false; m];

    for (offset, share) in TUBE_LAYER_OFFSETS.iter().zip(LAYER_THICKNESS) {
        for i in 0..m {
            let p = curve.points()[i] + normals[i] * (offset * delta);
            if let Some(dom) = domain {
                if !dom.strictly_inside(&p) {
                    damaged[i] = true;
                    continue;
                }
            }
            points.push(p);
            weights.push(ds[i] * share * delta);
            out_normals.push(normals[i]);
        }
    }

    let n_damaged = damaged.iter().filter(|d| **d).count();
    if n_damaged > 0 {
        let kept_fraction = 1.0 - n_damaged as f64 / m as f64;
        if kept_fraction < MIN_KEPT_FRACTION {
            return Err(Error::TubeLeavesDomain {
                delta,
                kept_fraction,
            });
        }
    }
    CollocationSet::new(points, weights, Some(out_normals))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tube_in_open_plane_has_five_layers() {
        let c = JordanCurve::circle(Point2::new(0.0, 0.0), 0.2, 64).unwrap();
        let t = tube(&c, 0.05, None).unwrap();
        assert_eq!(t.len(), 5 * 64);
        // Layer 0 comes first and reproduces the curve nodes exactly.
        for (p, q) in t.points()[..64].iter().zip(c.points()) {
            assert_eq!(p, q);
        }
        // Total weight approximates the tube area 2δL.
        let area = 2.0 * 0.05 * c.total_length();
        assert!((t.total_weight() - area).abs() < 1e-12 * area.max(1.0));
    }

    #[test]
    fn tube_well_inside_domain_keeps_everything() {
        let outer = JordanCurve::circle(Point2::origin(), 1.0, 256).unwrap();
        let d = Domain::no_control(outer, vec![]).unwrap();
        let c = JordanCurve::circle(Point2::origin(), 0.2, 64).unwrap();
        let t = tube(&c, 0.05, Some(&d)).unwrap();
        assert_eq!(t.len(), 5 * 64);
    }

    #[test]
    fn zero_width_tube_is_rejected() {
        let c = JordanCurve::circle(Point2::origin(), 0.2, 64).unwrap();
        assert!(matches!(tube(&c, 0.0, None), Err(Error::OutOfRange(_))));
        assert!(matches!(tube(&c, -0.1, None), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn tube_hugging_the_boundary_fails() {
        let outer = JordanCurve::circle(Point2::origin(), 1.0, 256).unwrap();
        let d = Domain::no_control(outer, vec![]).unwrap();
        let c = JordanCurve::circle(Point2::origin(), 0.95, 256).unwrap();
        match tube(&c, 0.2, Some(&d)) {
            Err(Error::TubeLeavesDomain {
                delta,
                kept_fraction,
            }) => {
                assert_eq!(delta, 0.2);
                // Every column loses its outermost point.
                assert!(kept_fraction < 1e-12, "kept {kept_fraction}");
            }
            other => panic!("expected TubeLeavesDomain, got {other:?}"),
        }
    }

    #[test]
    fn partial_clipping_below_threshold_is_tolerated() {
        // Off-center blob near the wall: the outermost layer reaches radius
        // 0.62 + 0.3 + 0.12 = 1.04 on the wall side, so the columns facing
        // the wall lose their rim point while most stay intact.
        let outer = JordanCurve::circle(Point2::origin(), 1.0, 512).unwrap();
        let d = Domain::no_control(outer, vec![]).unwrap();
        let c = JordanCurve::circle(Point2::new(0.62, 0.0), 0.3, 128).unwrap();
        let t = tube(&c, 0.12, Some(&d)).unwrap();
        assert!(t.len() < 5 * 128);
        assert!(t.len() > (5 * 128) / 2);
    }

    #[test]
    fn weights_scale_linearly_with_delta() {
        let c = JordanCurve::circle(Point2::origin(), 0.2, 64).unwrap();
        let t1 = tube(&c, 0.02, None).unwrap();
        let t2 = tube(&c, 0.04, None).unwrap();
        assert!((t2.total_weight() / t1.total_weight() - 2.0).abs() < 1e-12);
    }
}
