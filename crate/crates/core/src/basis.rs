//! Singular Stokes solutions with sources outside the domain.
//!
//! Every basis column is an exact solution of the stationary Stokes system
//! in Ω because its singularity lives outside the closure of Ω: Stokeslets
//! (point forces) sit on offset rings outside the outer boundary and inside
//! each hole, and one point source per hole spans the net-flux mode through
//! that hole's boundary, which Stokeslets alone cannot represent in a
//! multiply connected domain. Any coefficient vector therefore yields a
//! velocity/pressure pair with zero momentum residual and zero divergence
//! wherever it is evaluated in Ω.

use std::f64::consts::PI;

use nalgebra::{DVector, Matrix2, Point2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Domain, JordanCurve};

/// Minimum distance to a source below which evaluation is refused.
pub const SINGULARITY_TOL: f64 = 1e-12;

/// `stokes_residual` requires the evaluation point to be at least this many
/// finite-difference steps away from every source.
pub const RESIDUAL_CLEARANCE_STEPS: f64 = 10.0;

/// Fraction of the nominal offset that each placed source must actually
/// keep from the boundary (vertex-normal offsets cut corners slightly).
const OFFSET_SLACK: f64 = 0.75;

/// Which excluded region of the plane a source lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// Outside the outer boundary.
    Exterior,
    /// Inside hole `k` (index into `Domain::holes`).
    Hole(usize),
}

/// The singularity type of one basis column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceKind {
    /// Point force: velocity `(1/4π)[−f ln r + r (f·r)/r²]`, pressure
    /// `(f·r)/(2π r²)`.
    Stokeslet { force: Vector2<f64> },
    /// Mass monopole: velocity `r/(2π r²)`, zero pressure; unit flux
    /// through every curve enclosing the source.
    PointSource,
}

/// One basis column: a singularity location plus its kind and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ElementRepr", into = "ElementRepr")]
pub struct BasisElement {
    pub location: Point2<f64>,
    pub kind: SourceKind,
    pub region: Region,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ElementRepr {
    location: [f64; 2],
    kind: KindRepr,
    region: Region,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum KindRepr {
    Stokeslet { force: [f64; 2] },
    PointSource,
}

impl From<BasisElement> for ElementRepr {
    fn from(e: BasisElement) -> Self {
        ElementRepr {
            location: [e.location.x, e.location.y],
            kind: match e.kind {
                SourceKind::Stokeslet { force } => KindRepr::Stokeslet {
                    force: [force.x, force.y],
                },
                SourceKind::PointSource => KindRepr::PointSource,
            },
            region: e.region,
        }
    }
}

impl TryFrom<ElementRepr> for BasisElement {
    type Error = Error;

    fn try_from(r: ElementRepr) -> Result<Self> {
        let location = Point2::new(r.location[0], r.location[1]);
        if !location.coords.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidConfig("non-finite source location".into()));
        }
        let kind = match r.kind {
            KindRepr::Stokeslet { force } => {
                let force = Vector2::new(force[0], force[1]);
                if !force.iter().all(|c| c.is_finite()) || force.norm() == 0.0 {
                    return Err(Error::InvalidConfig(
                        "stokeslet force must be finite and nonzero".into(),
                    ));
                }
                SourceKind::Stokeslet { force }
            }
            KindRepr::PointSource => SourceKind::PointSource,
        };
        Ok(BasisElement {
            location,
            kind,
            region: r.region,
        })
    }
}

/// Coefficient vector pairing with a basis; serializes as a bare JSON array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FieldCoefficients {
    coeffs: Vec<f64>,
}

impl FieldCoefficients {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if !coeffs.iter().all(|c| c.is_finite()) {
            return Err(Error::DegenerateProblem(
                "field coefficients must be finite".into(),
            ));
        }
        Ok(Self { coeffs })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            coeffs: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.coeffs)
    }

    pub fn from_dvector(v: &DVector<f64>) -> Result<Self> {
        Self::new(v.iter().copied().collect())
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

impl From<FieldCoefficients> for Vec<f64> {
    fn from(c: FieldCoefficients) -> Self {
        c.coeffs
    }
}

impl TryFrom<Vec<f64>> for FieldCoefficients {
    type Error = Error;

    fn try_from(coeffs: Vec<f64>) -> Result<Self> {
        Self::new(coeffs)
    }
}

/// An ordered family of singular Stokes solutions. Columns are indexed by
/// position in `elements`; a placed basis lists exterior Stokeslet pairs
/// first, then each hole's Stokeslet pairs, then one point source per
/// populated hole.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StokesBasis {
    elements: Vec<BasisElement>,
    source_offset: f64,
}

impl StokesBasis {
    /// Assembles a basis from explicit elements. Finiteness is validated;
    /// keeping the singularities outside the domain of interest is the
    /// caller's responsibility (use [`place_sources`] for checked placement).
    pub fn from_elements(elements: Vec<BasisElement>, source_offset: f64) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::DegenerateProblem("empty basis".into()));
        }
        if !(source_offset.is_finite() && source_offset > 0.0) {
            return Err(Error::OutOfRange(format!(
                "source offset must be positive, got {source_offset}"
            )));
        }
        Ok(Self {
            elements,
            source_offset,
        })
    }

    /// Number of columns (coefficients).
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[BasisElement] {
        &self.elements
    }

    pub fn source_offset(&self) -> f64 {
        self.source_offset
    }

    /// Distance from `x` to the nearest singularity.
    pub fn min_source_distance(&self, x: &Point2<f64>) -> f64 {
        self.elements
            .iter()
            .map(|e| (x - e.location).norm())
            .fold(f64::INFINITY, f64::min)
    }

    fn guard(&self, x: &Point2<f64>) -> Result<()> {
        let dist = self.min_source_distance(x);
        if dist < SINGULARITY_TOL {
            return Err(Error::EvaluationAtSingularity { dist });
        }
        Ok(())
    }

    fn check_coeffs(&self, c: &FieldCoefficients) -> Result<()> {
        if c.len() != self.len() {
            return Err(Error::SampleCountMismatch {
                a: self.len(),
                b: c.len(),
            });
        }
        Ok(())
    }

    /// Velocity of column `i` at `x` (no singularity guard; callers that
    /// accept arbitrary points should use the `eval_*` methods).
    pub fn element_velocity(&self, i: usize, x: &Point2<f64>) -> Vector2<f64> {
        let e = &self.elements[i];
        let r = x - e.location;
        match e.kind {
            SourceKind::Stokeslet { force } => stokeslet_velocity(&r, &force),
            SourceKind::PointSource => point_source_velocity(&r),
        }
    }

    /// Pressure of column `i` at `x`, in the raw (unshifted) gauge.
    pub fn element_pressure(&self, i: usize, x: &Point2<f64>) -> f64 {
        let e = &self.elements[i];
        let r = x - e.location;
        match e.kind {
            SourceKind::Stokeslet { force } => stokeslet_pressure(&r, &force),
            SourceKind::PointSource => 0.0,
        }
    }

    /// Velocity gradient of column `i` at `x`, entries `[(i,k)] = ∂u_i/∂x_k`.
    pub fn element_gradient(&self, i: usize, x: &Point2<f64>) -> Matrix2<f64> {
        let e = &self.elements[i];
        let r = x - e.location;
        match e.kind {
            SourceKind::Stokeslet { force } => stokeslet_gradient(&r, &force),
            SourceKind::PointSource => point_source_gradient(&r),
        }
    }

    /// All column velocities at one point, guarded once.
    pub fn velocity_columns(&self, x: &Point2<f64>) -> Result<Vec<Vector2<f64>>> {
        self.guard(x)?;
        Ok((0..self.len()).map(|i| self.element_velocity(i, x)).collect())
    }

    /// All column gradients at one point, guarded once.
    pub fn gradient_columns(&self, x: &Point2<f64>) -> Result<Vec<Matrix2<f64>>> {
        self.guard(x)?;
        Ok((0..self.len()).map(|i| self.element_gradient(i, x)).collect())
    }

    /// Velocity of the combined field at `x`.
    pub fn eval_velocity(&self, c: &FieldCoefficients, x: &Point2<f64>) -> Result<Vector2<f64>> {
        self.check_coeffs(c)?;
        self.guard(x)?;
        let mut u = Vector2::zeros();
        for (i, &ci) in c.as_slice().iter().enumerate() {
            if ci != 0.0 {
                u += self.element_velocity(i, x) * ci;
            }
        }
        Ok(u)
    }

    /// Pressure of the combined field at `x`, raw gauge (see
    /// [`PressureGauge`] for the mean-zero report).
    pub fn eval_pressure(&self, c: &FieldCoefficients, x: &Point2<f64>) -> Result<f64> {
        self.check_coeffs(c)?;
        self.guard(x)?;
        let mut p = 0.0;
        for (i, &ci) in c.as_slice().iter().enumerate() {
            if ci != 0.0 {
                p += self.element_pressure(i, x) * ci;
            }
        }
        Ok(p)
    }

    /// Velocity gradient of the combined field at `x`.
    pub fn eval_gradient(&self, c: &FieldCoefficients, x: &Point2<f64>) -> Result<Matrix2<f64>> {
        self.check_coeffs(c)?;
        self.guard(x)?;
        let mut g = Matrix2::zeros();
        for (i, &ci) in c.as_slice().iter().enumerate() {
            if ci != 0.0 {
                g += self.element_gradient(i, x) * ci;
            }
        }
        Ok(g)
    }

    /// Central finite-difference check that the combined field solves the
    /// Stokes system at `x`: returns (momentum residual `−Δu + ∇p`,
    /// divergence). Requires `x` at distance ≥ 10·h from every source.
    pub fn stokes_residual(
        &self,
        c: &FieldCoefficients,
        x: &Point2<f64>,
        h: f64,
    ) -> Result<(Vector2<f64>, f64)> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::OutOfRange(format!(
                "finite-difference step must be positive, got {h}"
            )));
        }
        let dist = self.min_source_distance(x);
        let min_dist = RESIDUAL_CLEARANCE_STEPS * h;
        if dist < min_dist {
            return Err(Error::TooCloseToSingularity { dist, min_dist });
        }
        self.check_coeffs(c)?;

        let ex = Vector2::new(h, 0.0);
        let ey = Vector2::new(0.0, h);
        let u0 = self.eval_velocity(c, x)?;
        let uxp = self.eval_velocity(c, &(x + ex))?;
        let uxm = self.eval_velocity(c, &(x - ex))?;
        let uyp = self.eval_velocity(c, &(x + ey))?;
        let uym = self.eval_velocity(c, &(x - ey))?;
        let pxp = self.eval_pressure(c, &(x + ex))?;
        let pxm = self.eval_pressure(c, &(x - ex))?;
        let pyp = self.eval_pressure(c, &(x + ey))?;
        let pym = self.eval_pressure(c, &(x - ey))?;

        let laplacian = (uxp + uxm + uyp + uym - u0 * 4.0) / (h * h);
        let grad_p = Vector2::new((pxp - pxm) / (2.0 * h), (pyp - pym) / (2.0 * h));
        let momentum = -laplacian + grad_p;
        let divergence = (uxp.x - uxm.x) / (2.0 * h) + (uyp.y - uym.y) / (2.0 * h);
        Ok((momentum, divergence))
    }
}

/// Places sources for `domain`: `counts[0]` Stokeslet locations on an
/// outward offset ring of the outer boundary, `counts[k]` on an inward
/// offset ring inside hole `k − 1`, each location contributing two columns
/// (unit forces e₁, e₂), plus one point source at the interior anchor of
/// every populated hole. Locations are equispaced in arc length along the
/// offset ring; when the requested count divides the ring's node count the
/// ring nodes are subsampled exactly.
pub fn place_sources(domain: &Domain, counts: &[usize], offset: f64) -> Result<StokesBasis> {
    if counts.len() != domain.n_components() {
        return Err(Error::InvalidConfig(format!(
            "need one source count per boundary component ({}), got {}",
            domain.n_components(),
            counts.len()
        )));
    }
    if !(offset.is_finite() && offset > 0.0) {
        return Err(Error::OutOfRange(format!(
            "source offset must be positive, got {offset}"
        )));
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::InvalidConfig(
            "all per-region source counts are zero".into(),
        ));
    }

    let mut elements = Vec::new();
    for (component, &count) in counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let curve = domain.component(component);
        let region = if component == 0 {
            Region::Exterior
        } else {
            Region::Hole(component - 1)
        };
        // Outward from Ω: away from the outer boundary, into the hole.
        let sign = if component == 0 { 1.0 } else { -1.0 };

        if component != 0 {
            let anchor = interior_anchor(curve);
            let inradius = curve.distance_to_point(&anchor);
            if offset >= inradius {
                return Err(Error::OffsetTooLarge {
                    offset,
                    reason: format!(
                        "hole {} has inradius ~{inradius:.6}",
                        component - 1
                    ),
                });
            }
        }

        let normals = curve.outward_normals();
        let ring: Vec<Point2<f64>> = curve
            .points()
            .iter()
            .zip(&normals)
            .map(|(p, n)| p + n * (sign * offset))
            .collect();
        for loc in pick_ring_points(&ring, count) {
            let inside_omega = domain.strictly_inside(&loc);
            let in_right_region = match region {
                Region::Exterior => !domain.outer().winding_contains(&loc),
                Region::Hole(k) => domain.holes()[k].winding_contains(&loc),
            };
            let clearance = domain.min_boundary_distance(&loc);
            if inside_omega || !in_right_region || clearance < OFFSET_SLACK * offset {
                return Err(Error::OffsetTooLarge {
                    offset,
                    reason: format!(
                        "source at ({:.6}, {:.6}) lands too close to or inside the domain",
                        loc.x, loc.y
                    ),
                });
            }
            for force in [Vector2::new(1.0, 0.0), Vector2::new(0.0, 1.0)] {
                elements.push(BasisElement {
                    location: loc,
                    kind: SourceKind::Stokeslet { force },
                    region,
                });
            }
        }

        if component != 0 {
            elements.push(BasisElement {
                location: interior_anchor(curve),
                kind: SourceKind::PointSource,
                region,
            });
        }
    }
    StokesBasis::from_elements(elements, offset)
}

/// Deep interior point of a Jordan curve (area centroid, with a midpoint
/// probe fallback for non-convex shapes).
fn interior_anchor(curve: &JordanCurve) -> Point2<f64> {
    let centroid = curve.centroid();
    if curve.winding_contains(&centroid) {
        return centroid;
    }
    let m = curve.len();
    for i in 0..m {
        let candidate = nalgebra::center(&curve.points()[i], &curve.point(i + m / 2));
        if curve.winding_contains(&candidate) {
            return candidate;
        }
    }
    centroid
}

/// `count` points equispaced in arc length along a closed polyline,
/// subsampling the nodes exactly when `count` divides their number.
fn pick_ring_points(ring: &[Point2<f64>], count: usize) -> Vec<Point2<f64>> {
    let m = ring.len();
    if count <= m && m % count == 0 {
        let step = m / count;
        return (0..count).map(|j| ring[j * step]).collect();
    }
    let mut cum = Vec::with_capacity(m + 1);
    cum.push(0.0);
    for i in 0..m {
        let next = ring[(i + 1) % m];
        cum.push(cum[i] + (next - ring[i]).norm());
    }
    let total = *cum.last().expect("nonempty ring");
    (0..count)
        .map(|j| {
            let s = total * j as f64 / count as f64;
            let seg = match cum.binary_search_by(|c| c.partial_cmp(&s).expect("finite")) {
                Ok(i) => i.min(m - 1),
                Err(i) => i - 1,
            };
            let a = ring[seg];
            let b = ring[(seg + 1) % m];
            let frac = (s - cum[seg]) / (cum[seg + 1] - cum[seg]);
            a + (b - a) * frac
        })
        .collect()
}

/// Fixed interior quadrature grid that turns raw pressures into the
/// mean-zero gauge: reported pressure is `p(x) − mean(p over the grid)`.
/// The shift never affects velocities; it only pins the reported scalar.
#[derive(Debug, Clone)]
pub struct PressureGauge {
    grid: Vec<Point2<f64>>,
}

impl PressureGauge {
    /// Midpoint-rule lattice of at most `resolution²` cells over the outer
    /// bounding box, keeping the midpoints that lie strictly in Ω.
    pub fn new(domain: &Domain, resolution: usize) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::OutOfRange(
                "pressure gauge resolution must be at least 2".into(),
            ));
        }
        let (lo, hi) = domain.outer().bounding_box();
        let dx = (hi.x - lo.x) / resolution as f64;
        let dy = (hi.y - lo.y) / resolution as f64;
        let mut grid = Vec::new();
        for i in 0..resolution {
            for j in 0..resolution {
                let p = Point2::new(
                    lo.x + (i as f64 + 0.5) * dx,
                    lo.y + (j as f64 + 0.5) * dy,
                );
                if domain.strictly_inside(&p) {
                    grid.push(p);
                }
            }
        }
        if grid.is_empty() {
            return Err(Error::DegenerateProblem(
                "pressure gauge grid contains no interior points".into(),
            ));
        }
        Ok(Self { grid })
    }

    pub fn grid(&self) -> &[Point2<f64>] {
        &self.grid
    }

    /// Mean of the raw pressure over the gauge grid.
    pub fn mean_pressure(&self, basis: &StokesBasis, c: &FieldCoefficients) -> Result<f64> {
        let mut sum = 0.0;
        for p in &self.grid {
            sum += basis.eval_pressure(c, p)?;
        }
        Ok(sum / self.grid.len() as f64)
    }

    /// Pressure at `x` in the mean-zero gauge.
    pub fn shifted_pressure(
        &self,
        basis: &StokesBasis,
        c: &FieldCoefficients,
        x: &Point2<f64>,
    ) -> Result<f64> {
        Ok(basis.eval_pressure(c, x)? - self.mean_pressure(basis, c)?)
    }
}

fn stokeslet_velocity(r: &Vector2<f64>, f: &Vector2<f64>) -> Vector2<f64> {
    let r2 = r.norm_squared();
    let ln_r = 0.5 * r2.ln();
    (f * (-ln_r) + r * (f.dot(r) / r2)) / (4.0 * PI)
}

fn stokeslet_pressure(r: &Vector2<f64>, f: &Vector2<f64>) -> f64 {
    f.dot(r) / (2.0 * PI * r.norm_squared())
}

fn stokeslet_gradient(r: &Vector2<f64>, f: &Vector2<f64>) -> Matrix2<f64> {
    let r2 = r.norm_squared();
    let fr = f.dot(r);
    Matrix2::from_fn(|i, k| {
        let delta_ik = if i == k { 1.0 } else { 0.0 };
        (-f[i] * r[k] / r2 + (delta_ik * fr + r[i] * f[k]) / r2
            - 2.0 * r[i] * fr * r[k] / (r2 * r2))
            / (4.0 * PI)
    })
}

fn point_source_velocity(r: &Vector2<f64>) -> Vector2<f64> {
    r / (2.0 * PI * r.norm_squared())
}

fn point_source_gradient(r: &Vector2<f64>) -> Matrix2<f64> {
    let r2 = r.norm_squared();
    Matrix2::from_fn(|i, k| {
        let delta_ik = if i == k { 1.0 } else { 0.0 };
        (delta_ik / r2 - 2.0 * r[i] * r[k] / (r2 * r2)) / (2.0 * PI)
    })
}
