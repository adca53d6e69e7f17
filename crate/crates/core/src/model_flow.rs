//! Reference divergence-free flows carrying one curve onto another, and
//! RK4 advection of curves under arbitrary velocity fields.
//!
//! Flows are perpendicular gradients of closed-form stream functions, so
//! their divergence vanishes identically and they are zero outside an
//! explicitly declared support contained in Ω. Three generators are
//! provided: a translation inside a stadium-shaped cutoff, a radial morph
//! between star-shaped curves driven by a Fourier radius interpolation with
//! exact area renormalization, and their composition.

use nalgebra::{Matrix2, Point2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{parametric_distance, Domain, JordanCurve, MAX_SPACING_RATIO};

/// Number of Fourier harmonics used to represent star-shaped radius
/// functions in the radial morph.
const MORPH_HARMONICS: usize = 16;

/// Post-construction check: the integrated flow must land within this
/// fraction of the domain diameter from the target curve.
pub const MODEL_FLOW_TOL_REL: f64 = 1e-2;

/// Time step used for the construction-time verification integration.
const POST_CHECK_DT: f64 = 2e-3;

/// A time-dependent velocity field on [0, 1] × Ω.
pub trait VelocityField: Sync {
    fn velocity(&self, t: f64, x: &Point2<f64>) -> Result<Vector2<f64>>;

    /// Spatial velocity gradient; the default is a central finite
    /// difference, overridden where an analytic gradient is available.
    fn gradient(&self, t: f64, x: &Point2<f64>) -> Result<Matrix2<f64>> {
        let h = 1e-6;
        let ex = Vector2::new(h, 0.0);
        let ey = Vector2::new(0.0, h);
        let uxp = self.velocity(t, &(x + ex))?;
        let uxm = self.velocity(t, &(x - ex))?;
        let uyp = self.velocity(t, &(x + ey))?;
        let uym = self.velocity(t, &(x - ey))?;
        Ok(Matrix2::new(
            (uxp.x - uxm.x) / (2.0 * h),
            (uyp.x - uym.x) / (2.0 * h),
            (uxp.y - uxm.y) / (2.0 * h),
            (uyp.y - uym.y) / (2.0 * h),
        ))
    }
}

impl<F> VelocityField for F
where
    F: Fn(f64, &Point2<f64>) -> Vector2<f64> + Sync,
{
    fn velocity(&self, t: f64, x: &Point2<f64>) -> Result<Vector2<f64>> {
        Ok(self(t, x))
    }
}

/// Which generator to use for the model flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowScenario {
    /// Rigid translation along the straight line between centroids.
    Translation,
    /// Radial interpolation between star-shaped curves about a common
    /// center, area-renormalized.
    RadialMorph,
    /// Translation on [0, ½], radial morph on [½, 1].
    Composite,
}

/// Quintic smoothstep: 0 → 1 on [0, 1] with vanishing first and second
/// derivatives at both ends.
fn smoothstep(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

fn smoothstep_prime(s: f64) -> f64 {
    if !(0.0..=1.0).contains(&s) {
        0.0
    } else {
        30.0 * s * s * (1.0 - s) * (1.0 - s)
    }
}

/// Time profile τ with τ(0)=0, τ(1)=1 and τ'(0)=τ'(1)=0; the flow's speed
/// factor is τ', so every generator starts and ends at rest. Material
/// points in a translation flow's core move as x(t) = x(0) + τ(t)·d.
pub fn tau(t: f64) -> f64 {
    smoothstep(t)
}

/// Derivative of [`tau`].
pub fn tau_prime(t: f64) -> f64 {
    smoothstep_prime(t)
}

/// Translation flow: stream function τ'(t)·χ(x)·L(x) with L linear and χ a
/// stadium-shaped cutoff, identically 1 on a core containing the swept
/// blob.
#[derive(Debug, Clone)]
pub struct TranslationFlow {
    start: Point2<f64>,
    displacement: Vector2<f64>,
    r_core: f64,
    width: f64,
}

impl TranslationFlow {
    /// Distance to the sweep segment and the unit gradient of that distance.
    fn segment_distance(&self, x: &Point2<f64>) -> (f64, Vector2<f64>) {
        let d = self.displacement;
        let rel = x - self.start;
        let len2 = d.norm_squared();
        let t = if len2 > 0.0 {
            (rel.dot(&d) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let closest = self.start + d * t;
        let offset = x - closest;
        let rho = offset.norm();
        let grad = if rho > 0.0 {
            offset / rho
        } else {
            Vector2::zeros()
        };
        (rho, grad)
    }

    /// Cutoff value and its radial derivative at distance `rho`.
    fn cutoff(&self, rho: f64) -> (f64, f64) {
        if rho <= self.r_core {
            (1.0, 0.0)
        } else if rho >= self.r_core + self.width {
            (0.0, 0.0)
        } else {
            let s = (self.r_core + self.width - rho) / self.width;
            (smoothstep(s), -smoothstep_prime(s) / self.width)
        }
    }

    fn velocity(&self, t: f64, x: &Point2<f64>) -> Vector2<f64> {
        let g = if (0.0..=1.0).contains(&t) {
            tau_prime(t)
        } else {
            0.0
        };
        if g == 0.0 || self.displacement.norm_squared() == 0.0 {
            return Vector2::zeros();
        }
        let (rho, grad_rho) = self.segment_distance(x);
        let (chi, dchi) = self.cutoff(rho);
        if chi == 0.0 {
            return Vector2::zeros();
        }
        let v = self.displacement;
        let mid = self.start + v * 0.5;
        // Stream function χ·L with L = v₂(x₁−m₁) − v₁(x₂−m₂); the velocity
        // is the perpendicular gradient, which reduces to v on the core.
        let l = v.y * (x.x - mid.x) - v.x * (x.y - mid.y);
        let grad_chi = grad_rho * dchi;
        (v * chi + Vector2::new(-grad_chi.y, grad_chi.x) * l) * g
    }

    fn in_support(&self, x: &Point2<f64>) -> bool {
        self.segment_distance(x).0 < self.r_core + self.width
    }
}

/// Radial morph flow between star-shaped curves about a common center.
///
/// The radius functions of both curves are represented as Fourier series
/// r(θ); at time t the curve radius is r̃(θ,t) = s(t)·[(1−σ(t))r₀ + σ(t)r₁]
/// with σ a smoothstep and s(t) the exact area renormalizer. The stream
/// function is Ψ = −F(θ,t)·g(ρ) with F_θ = r̃ ∂_t r̃ and g ≡ 1 on a radial
/// plateau containing every curve radius, so points on the curve move
/// exactly radially with ṙ = ∂_t r̃ while Ψ (hence the flow) shuts off
/// smoothly away from the band. F is 2π-periodic because the renormalized
/// area is constant in t, making the construction single-valued.
#[derive(Debug, Clone)]
pub struct RadialMorphFlow {
    center: Point2<f64>,
    /// cos/sin coefficients of r₀ and r₁, index 0..=K.
    cos0: Vec<f64>,
    sin0: Vec<f64>,
    cos1: Vec<f64>,
    sin1: Vec<f64>,
    /// Fourier area moment m = a₀² + ½Σ(a_k²+b_k²) of r₀; the interpolated
    /// series is rescaled to keep this moment (hence the area) constant.
    m0: f64,
    /// Radial cutoff knots: 0 ≤ z0 < z1 ≤ band ≤ z2 < z3; g=1 on [z1,z2].
    z: [f64; 4],
}

/// Interpolated radius series and its time derivative at one time.
struct MorphSeries {
    a: Vec<f64>,
    b: Vec<f64>,
    a_dot: Vec<f64>,
    b_dot: Vec<f64>,
}

impl RadialMorphFlow {
    fn series_at(&self, t: f64) -> MorphSeries {
        let k = self.cos0.len();
        let sigma = smoothstep(t);
        let sigma_dot = smoothstep_prime(t);
        let mut big_a = vec![0.0; k];
        let mut big_b = vec![0.0; k];
        let mut big_a_dot = vec![0.0; k];
        let mut big_b_dot = vec![0.0; k];
        for i in 0..k {
            big_a[i] = (1.0 - sigma) * self.cos0[i] + sigma * self.cos1[i];
            big_b[i] = (1.0 - sigma) * self.sin0[i] + sigma * self.sin1[i];
            big_a_dot[i] = sigma_dot * (self.cos1[i] - self.cos0[i]);
            big_b_dot[i] = sigma_dot * (self.sin1[i] - self.sin0[i]);
        }
        let m = fourier_area_moment(&big_a, &big_b);
        let mut m_dot = 2.0 * big_a[0] * big_a_dot[0];
        for i in 1..k {
            m_dot += big_a[i] * big_a_dot[i] + big_b[i] * big_b_dot[i];
        }
        let s = (self.m0 / m).sqrt();
        let s_dot = -0.5 * s * m_dot / m;
        let mut series = MorphSeries {
            a: vec![0.0; k],
            b: vec![0.0; k],
            a_dot: vec![0.0; k],
            b_dot: vec![0.0; k],
        };
        for i in 0..k {
            series.a[i] = s * big_a[i];
            series.b[i] = s * big_b[i];
            series.a_dot[i] = s_dot * big_a[i] + s * big_a_dot[i];
            series.b_dot[i] = s_dot * big_b[i] + s * big_b_dot[i];
        }
        series
    }

    /// Radial cutoff and derivative.
    fn plateau(&self, rho: f64) -> (f64, f64) {
        let [z0, z1, z2, z3] = self.z;
        if rho <= z0 || rho >= z3 {
            (0.0, 0.0)
        } else if rho < z1 {
            let s = (rho - z0) / (z1 - z0);
            (smoothstep(s), smoothstep_prime(s) / (z1 - z0))
        } else if rho <= z2 {
            (1.0, 0.0)
        } else {
            let s = (z3 - rho) / (z3 - z2);
            (smoothstep(s), -smoothstep_prime(s) / (z3 - z2))
        }
    }

    fn velocity(&self, t: f64, x: &Point2<f64>) -> Vector2<f64> {
        if !(0.0..=1.0).contains(&t) {
            return Vector2::zeros();
        }
        let rel = x - self.center;
        let rho = rel.norm();
        let (g, g_prime) = self.plateau(rho);
        if g == 0.0 && g_prime == 0.0 {
            return Vector2::zeros();
        }
        let theta = rel.y.atan2(rel.x);
        let series = self.series_at(t);
        let e_r = rel / rho;
        let e_theta = Vector2::new(-e_r.y, e_r.x);

        // u_r = F_θ g / ρ with F_θ = r̃ ∂_t r̃, evaluated pointwise.
        let r_tilde = eval_series(&series.a, &series.b, theta);
        let r_tilde_dot = eval_series(&series.a_dot, &series.b_dot, theta);
        let u_r = r_tilde * r_tilde_dot * g / rho;

        // u_θ = −F g'; F is the analytic θ-antiderivative of the product
        // series, needed only on the transition bands.
        let u_theta = if g_prime != 0.0 {
            let (pa, pb) = product_series(&series.a, &series.b, &series.a_dot, &series.b_dot);
            -integrated_series(&pa, &pb, theta) * g_prime
        } else {
            0.0
        };
        e_r * u_r + e_theta * u_theta
    }

    fn in_support(&self, x: &Point2<f64>) -> bool {
        let rho = (x - self.center).norm();
        self.z[0] < rho && rho < self.z[3]
    }
}

/// Fourier area moment m with πm the enclosed area of r(θ).
fn fourier_area_moment(a: &[f64], b: &[f64]) -> f64 {
    let mut m = a[0] * a[0];
    for i in 1..a.len() {
        m += 0.5 * (a[i] * a[i] + b[i] * b[i]);
    }
    m
}

fn eval_series(a: &[f64], b: &[f64], theta: f64) -> f64 {
    let mut v = a[0];
    for k in 1..a.len() {
        let kt = k as f64 * theta;
        v += a[k] * kt.cos() + b[k] * kt.sin();
    }
    v
}

/// Real trigonometric product (a,b)·(c,d) as a series of doubled degree.
/// The constant term is reported but is ~0 whenever the factors come from
/// an area-conserving interpolation.
fn product_series(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let k = a.len() - 1;
    // Complex half-coefficients z_j, j = −K..K stored at offset j+K.
    let to_complex = |ca: &[f64], cb: &[f64]| -> Vec<(f64, f64)> {
        let mut z = vec![(0.0, 0.0); 2 * k + 1];
        z[k] = (ca[0], 0.0);
        for j in 1..=k {
            z[k + j] = (0.5 * ca[j], -0.5 * cb[j]);
            z[k - j] = (0.5 * ca[j], 0.5 * cb[j]);
        }
        z
    };
    let p = to_complex(a, b);
    let q = to_complex(c, d);
    let n = 2 * k;
    let mut w = vec![(0.0, 0.0); 2 * n + 1];
    for (i, &(pr, pi)) in p.iter().enumerate() {
        if pr == 0.0 && pi == 0.0 {
            continue;
        }
        for (j, &(qr, qi)) in q.iter().enumerate() {
            let m = i + j; // offset index: true frequency i+j−2K stored at m−...
            w[m].0 += pr * qr - pi * qi;
            w[m].1 += pr * qi + pi * qr;
        }
    }
    // w index m corresponds to frequency m − 2K; read off the real series.
    let mut pa = vec![0.0; n + 1];
    let mut pb = vec![0.0; n + 1];
    pa[0] = w[n].0;
    for j in 1..=n {
        pa[j] = 2.0 * w[n + j].0;
        pb[j] = -2.0 * w[n + j].1;
    }
    (pa, pb)
}

/// θ-antiderivative of a zero-mean trig series, vanishing at θ = 0. The
/// stored constant term is dropped (it is zero up to rounding for
/// area-conserving morphs).
fn integrated_series(a: &[f64], b: &[f64], theta: f64) -> f64 {
    let mut v = 0.0;
    for k in 1..a.len() {
        let kf = k as f64;
        let kt = kf * theta;
        v += a[k] * kt.sin() / kf + b[k] * (1.0 - kt.cos()) / kf;
    }
    v
}

/// A model flow: one of the generators, with its declared support.
#[derive(Debug, Clone)]
pub struct ModelFlow {
    kind: FlowKind,
}

#[derive(Debug, Clone)]
enum FlowKind {
    Translation(TranslationFlow),
    RadialMorph(RadialMorphFlow),
    Composite(TranslationFlow, RadialMorphFlow),
}

impl VelocityField for ModelFlow {
    fn velocity(&self, t: f64, x: &Point2<f64>) -> Result<Vector2<f64>> {
        Ok(self.eval(t, x))
    }
}

impl ModelFlow {
    /// Velocity of the model flow (total time on [0, 1]).
    pub fn eval(&self, t: f64, x: &Point2<f64>) -> Vector2<f64> {
        match &self.kind {
            FlowKind::Translation(f) => f.velocity(t, x),
            FlowKind::RadialMorph(f) => f.velocity(t, x),
            FlowKind::Composite(tr, mo) => {
                if t <= 0.5 {
                    tr.velocity(2.0 * t, x) * 2.0
                } else {
                    mo.velocity(2.0 * t - 1.0, x) * 2.0
                }
            }
        }
    }

    /// Whether `x` lies in the (time-independent) declared support; the
    /// velocity is exactly zero outside.
    pub fn in_support(&self, x: &Point2<f64>) -> bool {
        match &self.kind {
            FlowKind::Translation(f) => f.in_support(x),
            FlowKind::RadialMorph(f) => f.in_support(x),
            FlowKind::Composite(tr, mo) => tr.in_support(x) || mo.in_support(x),
        }
    }

    /// Reproducible closed-form description of the flow.
    pub fn descriptor(&self) -> FlowDescriptor {
        match &self.kind {
            FlowKind::Translation(f) => FlowDescriptor::Translation(f.into()),
            FlowKind::RadialMorph(f) => FlowDescriptor::RadialMorph(f.into()),
            FlowKind::Composite(tr, mo) => FlowDescriptor::Composite {
                translation: tr.into(),
                morph: mo.into(),
            },
        }
    }

    /// Rebuilds a flow from its descriptor.
    pub fn from_descriptor(d: &FlowDescriptor) -> Result<Self> {
        let kind = match d {
            FlowDescriptor::Translation(p) => FlowKind::Translation(p.try_into()?),
            FlowDescriptor::RadialMorph(p) => FlowKind::RadialMorph(p.try_into()?),
            FlowDescriptor::Composite { translation, morph } => {
                FlowKind::Composite(translation.try_into()?, morph.try_into()?)
            }
        };
        Ok(ModelFlow { kind })
    }
}

/// Serialized form of a model flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlowDescriptor {
    Translation(TranslationParams),
    RadialMorph(MorphParams),
    Composite {
        translation: TranslationParams,
        morph: MorphParams,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslationParams {
    pub start: [f64; 2],
    pub displacement: [f64; 2],
    pub r_core: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MorphParams {
    pub center: [f64; 2],
    pub cos0: Vec<f64>,
    pub sin0: Vec<f64>,
    pub cos1: Vec<f64>,
    pub sin1: Vec<f64>,
    pub z: [f64; 4],
}

impl From<&TranslationFlow> for TranslationParams {
    fn from(f: &TranslationFlow) -> Self {
        TranslationParams {
            start: [f.start.x, f.start.y],
            displacement: [f.displacement.x, f.displacement.y],
            r_core: f.r_core,
            width: f.width,
        }
    }
}

impl TryFrom<&TranslationParams> for TranslationFlow {
    type Error = Error;

    fn try_from(p: &TranslationParams) -> Result<Self> {
        let vals = [
            p.start[0],
            p.start[1],
            p.displacement[0],
            p.displacement[1],
            p.r_core,
            p.width,
        ];
        if !vals.iter().all(|v| v.is_finite()) || p.r_core <= 0.0 || p.width <= 0.0 {
            return Err(Error::InvalidConfig(
                "malformed translation flow parameters".into(),
            ));
        }
        Ok(TranslationFlow {
            start: Point2::new(p.start[0], p.start[1]),
            displacement: Vector2::new(p.displacement[0], p.displacement[1]),
            r_core: p.r_core,
            width: p.width,
        })
    }
}

impl From<&RadialMorphFlow> for MorphParams {
    fn from(f: &RadialMorphFlow) -> Self {
        MorphParams {
            center: [f.center.x, f.center.y],
            cos0: f.cos0.clone(),
            sin0: f.sin0.clone(),
            cos1: f.cos1.clone(),
            sin1: f.sin1.clone(),
            z: f.z,
        }
    }
}

impl TryFrom<&MorphParams> for RadialMorphFlow {
    type Error = Error;

    fn try_from(p: &MorphParams) -> Result<Self> {
        let lens_ok = !p.cos0.is_empty()
            && p.cos0.len() == p.sin0.len()
            && p.cos0.len() == p.cos1.len()
            && p.cos0.len() == p.sin1.len();
        let finite = p.center.iter().all(|v| v.is_finite())
            && p.z.iter().all(|v| v.is_finite())
            && [&p.cos0, &p.sin0, &p.cos1, &p.sin1]
                .iter()
                .all(|v| v.iter().all(|c| c.is_finite()));
        let z_ok = p.z[0] >= 0.0 && p.z.windows(2).all(|w| w[0] < w[1]);
        if !(lens_ok && finite && z_ok) {
            return Err(Error::InvalidConfig(
                "malformed radial morph parameters".into(),
            ));
        }
        let m0 = fourier_area_moment(&p.cos0, &p.sin0);
        Ok(RadialMorphFlow {
            center: Point2::new(p.center[0], p.center[1]),
            cos0: p.cos0.clone(),
            sin0: p.sin0.clone(),
            cos1: p.cos1.clone(),
            sin1: p.sin1.clone(),
            m0,
            z: p.z,
        })
    }
}

/// Relative area tolerance for the incompressibility precondition.
pub const AREA_TOL_REL: f64 = 1e-3;

/// Builds the model flow carrying `gamma0` to `gamma1` inside `domain`.
/// `clearance_margin` is the minimum distance both curves must keep from
/// the boundary. The construction is verified by integrating the flow and
/// comparing the image with `gamma1`.
pub fn build_model_flow(
    gamma0: &JordanCurve,
    gamma1: &JordanCurve,
    domain: &Domain,
    scenario: FlowScenario,
    clearance_margin: f64,
) -> Result<ModelFlow> {
    let a0 = gamma0.signed_area();
    let a1 = gamma1.signed_area();
    let rel = (a0 - a1).abs() / a0.max(a1);
    if rel > AREA_TOL_REL {
        return Err(Error::AreaMismatch { a0, a1, rel });
    }
    let holes0 = domain.enclosed_holes(gamma0)?;
    let holes1 = domain.enclosed_holes(gamma1)?;
    if holes0 != holes1 {
        return Err(Error::HomotopyClassMismatch);
    }
    if domain.curve_clearance(gamma0) < clearance_margin
        || domain.curve_clearance(gamma1) < clearance_margin
    {
        return Err(Error::CurveNotInDomain);
    }

    let kind = match scenario {
        FlowScenario::Translation => {
            FlowKind::Translation(translation_flow(gamma0, gamma1, domain)?)
        }
        FlowScenario::RadialMorph => {
            let center = nalgebra::center(&gamma0.centroid(), &gamma1.centroid());
            FlowKind::RadialMorph(radial_morph_flow(gamma0, gamma1, domain, &center)?)
        }
        FlowScenario::Composite => {
            let d = gamma1.centroid() - gamma0.centroid();
            let mid = gamma0.translated(d);
            let tr = translation_flow(gamma0, &mid, domain)?;
            let mo = radial_morph_flow(&mid, gamma1, domain, &gamma1.centroid())?;
            FlowKind::Composite(tr, mo)
        }
    };
    let flow = ModelFlow { kind };

    // Construction-time verification: integrate and compare with γ1.
    let image = advect(&flow, gamma0, 0.0, 1.0, POST_CHECK_DT, Some(domain), false)?;
    let distance = parametric_distance(&image, gamma1, 0)?;
    let tol = MODEL_FLOW_TOL_REL * domain.diameter();
    if distance > tol {
        return Err(Error::ModelFlowMissesTarget { distance, tol });
    }
    Ok(flow)
}

fn translation_flow(
    gamma0: &JordanCurve,
    gamma1: &JordanCurve,
    domain: &Domain,
) -> Result<TranslationFlow> {
    let c0 = gamma0.centroid();
    let c1 = gamma1.centroid();
    let d = c1 - c0;
    let blob_radius = |curve: &JordanCurve, c: &Point2<f64>| {
        curve
            .points()
            .iter()
            .map(|p| (p - c).norm())
            .fold(0.0, f64::max)
    };
    let r_blob = blob_radius(gamma0, &c0).max(blob_radius(gamma1, &c1));

    // Clearance of the swept blob from the boundary, sampled along the path.
    let mut clearance = f64::INFINITY;
    for k in 0..=64 {
        let c = c0 + d * (k as f64 / 64.0);
        if !matches!(domain.contains(&c), Ok(true)) {
            return Err(Error::SweepLeavesDomain);
        }
        clearance = clearance.min(domain.min_boundary_distance(&c) - r_blob);
    }
    if clearance <= 0.0 {
        return Err(Error::SweepLeavesDomain);
    }
    Ok(TranslationFlow {
        start: c0,
        displacement: d,
        r_core: r_blob + 0.3 * clearance,
        width: 0.1 * clearance,
    })
}

/// Verifies that `curve` is star-shaped about `center`: vertex polar angles
/// must be strictly monotone around one full turn.
fn star_check(curve: &JordanCurve, center: &Point2<f64>) -> Result<Vec<f64>> {
    let mut angles = Vec::with_capacity(curve.len());
    let mut total = 0.0;
    let mut prev: Option<f64> = None;
    for p in curve.points() {
        let rel = p - center;
        if rel.norm() == 0.0 {
            return Err(Error::NotStarShaped { x: p.x, y: p.y });
        }
        let theta = rel.y.atan2(rel.x);
        if let Some(q) = prev {
            let mut step = theta - q;
            while step <= -std::f64::consts::PI {
                step += 2.0 * std::f64::consts::PI;
            }
            while step > std::f64::consts::PI {
                step -= 2.0 * std::f64::consts::PI;
            }
            if step <= 0.0 {
                return Err(Error::NotStarShaped { x: p.x, y: p.y });
            }
            total += step;
        }
        prev = Some(theta);
        angles.push(theta);
    }
    // Closing step back to the first vertex.
    let mut closing = angles[0] - angles[curve.len() - 1];
    while closing <= -std::f64::consts::PI {
        closing += 2.0 * std::f64::consts::PI;
    }
    if closing <= 0.0 {
        let p = curve.points()[0];
        return Err(Error::NotStarShaped { x: p.x, y: p.y });
    }
    total += closing;
    if (total - 2.0 * std::f64::consts::PI).abs() > 1e-6 {
        let p = curve.points()[0];
        return Err(Error::NotStarShaped { x: p.x, y: p.y });
    }
    Ok(angles)
}

/// Least-squares Fourier fit of the radius samples r(θ_i).
fn fit_radius_series(angles: &[f64], radii: &[f64], harmonics: usize) -> (Vec<f64>, Vec<f64>) {
    let m = angles.len();
    let k = harmonics.min(m / 4).max(1);
    let ncols = 2 * k + 1;
    let mut a = nalgebra::DMatrix::zeros(m, ncols);
    let b = nalgebra::DVector::from_column_slice(radii);
    for (i, &theta) in angles.iter().enumerate() {
        a[(i, 0)] = 1.0;
        for j in 1..=k {
            let jt = j as f64 * theta;
            a[(i, 2 * j - 1)] = jt.cos();
            a[(i, 2 * j)] = jt.sin();
        }
    }
    let sol = crate::tsvd::solve_truncated(&a, &b, 1e-12).expect("radius fit");
    let mut cos = vec![0.0; k + 1];
    let mut sin = vec![0.0; k + 1];
    cos[0] = sol.x[0];
    for j in 1..=k {
        cos[j] = sol.x[2 * j - 1];
        sin[j] = sol.x[2 * j];
    }
    (cos, sin)
}

fn radial_morph_flow(
    gamma0: &JordanCurve,
    gamma1: &JordanCurve,
    domain: &Domain,
    center: &Point2<f64>,
) -> Result<RadialMorphFlow> {
    let angles0 = star_check(gamma0, center)?;
    let angles1 = star_check(gamma1, center)?;
    let radii = |curve: &JordanCurve| -> Vec<f64> {
        curve.points().iter().map(|p| (p - center).norm()).collect()
    };
    let r0 = radii(gamma0);
    let r1 = radii(gamma1);
    let (cos0, sin0) = fit_radius_series(&angles0, &r0, MORPH_HARMONICS);
    let (cos1, sin1) = fit_radius_series(&angles1, &r1, MORPH_HARMONICS);
    let m0 = fourier_area_moment(&cos0, &sin0);

    // Radius band over all times, including the raw node radii.
    let mut rmin = f64::INFINITY;
    let mut rmax = 0.0f64;
    for r in r0.iter().chain(&r1) {
        rmin = rmin.min(*r);
        rmax = rmax.max(*r);
    }
    let probe = RadialMorphFlow {
        center: *center,
        cos0: cos0.clone(),
        sin0: sin0.clone(),
        cos1: cos1.clone(),
        sin1: sin1.clone(),
        m0,
        z: [0.0, 1.0, 2.0, 3.0], // placeholder, not used by series_at
    };
    for ti in 0..=32 {
        let series = probe.series_at(ti as f64 / 32.0);
        for j in 0..256 {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / 256.0;
            let r = eval_series(&series.a, &series.b, theta);
            rmin = rmin.min(r);
            rmax = rmax.max(r);
        }
    }
    if !(rmin.is_finite() && rmin > 0.0) {
        let p = gamma0.points()[0];
        return Err(Error::NotStarShaped { x: p.x, y: p.y });
    }

    // Inner free space: down to the largest obstruction (hole) under the
    // band, or the center itself.
    let mut obstruction = 0.0f64;
    for hole in domain.holes() {
        let hc = hole.centroid();
        let hr = hole
            .points()
            .iter()
            .map(|p| (p - hc).norm())
            .fold(0.0, f64::max);
        let reach = (hc - center).norm() + hr;
        if reach < rmin {
            obstruction = obstruction.max(reach);
        }
    }
    let inner_gap = rmin - obstruction;
    if inner_gap <= 0.0 {
        return Err(Error::SweepLeavesDomain);
    }
    // Outer free space: distance from the band's outer circle to ∂Ω.
    let mut outer_gap = f64::INFINITY;
    for j in 0..256 {
        let theta = 2.0 * std::f64::consts::PI * j as f64 / 256.0;
        let p = center + Vector2::new(theta.cos(), theta.sin()) * rmax;
        if !matches!(domain.contains(&p), Ok(true)) {
            return Err(Error::SweepLeavesDomain);
        }
        outer_gap = outer_gap.min(domain.min_boundary_distance(&p));
    }
    let z = [
        rmin - 0.6 * inner_gap,
        rmin - 0.2 * inner_gap,
        rmax + 0.2 * outer_gap,
        rmax + 0.6 * outer_gap,
    ];
    // The whole support annulus must lie in Ω.
    for i in 0..=9 {
        let rho = z[0] + (z[3] - z[0]) * i as f64 / 9.0;
        for j in 0..128 {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / 128.0;
            let p = center + Vector2::new(theta.cos(), theta.sin()) * rho;
            if !domain.strictly_inside(&p) {
                return Err(Error::SweepLeavesDomain);
            }
        }
    }
    Ok(RadialMorphFlow {
        center: *center,
        cos0,
        sin0,
        cos1,
        sin1,
        m0,
        z,
    })
}

/// The §6-style start-up ramp factor (τ − t)² / τ².
pub fn ramp_factor(t: f64, tau_ramp: f64) -> Result<f64> {
    if !(tau_ramp.is_finite() && tau_ramp > 0.0) {
        return Err(Error::OutOfRange(format!(
            "ramp horizon must be positive, got {tau_ramp}"
        )));
    }
    if !(0.0..=tau_ramp).contains(&t) {
        return Err(Error::OutOfRange(format!(
            "ramp time {t} outside [0, {tau_ramp}]"
        )));
    }
    let r = (tau_ramp - t) / tau_ramp;
    Ok(r * r)
}

/// A time-stamped record of an advection.
#[derive(Debug, Clone)]
pub struct FlowMap {
    pub dt: f64,
    pub snapshots: Vec<(f64, JordanCurve)>,
    /// Number of arc-length resamplings triggered by spacing drift.
    pub resamples: usize,
}

impl FlowMap {
    pub fn final_curve(&self) -> &JordanCurve {
        &self.snapshots.last().expect("at least the initial snapshot").1
    }
}

fn rk4_step<F: VelocityField + ?Sized>(
    field: &F,
    t: f64,
    h: f64,
    x: &Point2<f64>,
) -> Result<Point2<f64>> {
    let k1 = field.velocity(t, x)?;
    let k2 = field.velocity(t + 0.5 * h, &(x + k1 * (0.5 * h)))?;
    let k3 = field.velocity(t + 0.5 * h, &(x + k2 * (0.5 * h)))?;
    let k4 = field.velocity(t + h, &(x + k3 * h))?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

fn step_count(t0: f64, t1: f64, dt: f64) -> Result<usize> {
    if !(dt.is_finite() && dt > 0.0) || t1 <= t0 {
        return Err(Error::OutOfRange(format!(
            "advection needs t1 > t0 and dt > 0, got [{t0}, {t1}], dt {dt}"
        )));
    }
    Ok(((t1 - t0) / dt - 1e-9).ceil().max(1.0) as usize)
}

/// RK4-advects raw material points, checking only containment. Points keep
/// their identity (no resampling), which is what Gronwall-style comparisons
/// need.
pub fn advect_points<F: VelocityField + ?Sized>(
    field: &F,
    points: &[Point2<f64>],
    t0: f64,
    t1: f64,
    dt: f64,
    domain: Option<&Domain>,
) -> Result<Vec<Point2<f64>>> {
    let n = step_count(t0, t1, dt)?;
    let h = (t1 - t0) / n as f64;
    let mut pts = points.to_vec();
    for step in 0..n {
        let t = t0 + h * step as f64;
        pts = pts
            .par_iter()
            .map(|p| rk4_step(field, t, h, p))
            .collect::<Result<Vec<_>>>()?;
        if let Some(dom) = domain {
            let t_next = t0 + h * (step + 1) as f64;
            for p in &pts {
                if !matches!(dom.contains(p), Ok(true)) {
                    return Err(Error::CurveLeftDomain {
                        t: t_next,
                        x: p.x,
                        y: p.y,
                    });
                }
            }
        }
    }
    Ok(pts)
}

/// RK4-advects a curve from `t0` to `t1`, recording a snapshot after every
/// step. Each intermediate curve is checked for simplicity and (when a
/// domain is given) containment; when `resample` is set, arc-length
/// resampling restores quasi-uniform spacing whenever the spacing ratio
/// exceeds the curve invariant bound.
pub fn advect_map<F: VelocityField + ?Sized>(
    field: &F,
    curve: &JordanCurve,
    t0: f64,
    t1: f64,
    dt: f64,
    domain: Option<&Domain>,
    resample: bool,
) -> Result<FlowMap> {
    let n = step_count(t0, t1, dt)?;
    let h = (t1 - t0) / n as f64;
    let m = curve.len();
    let mut pts = curve.points().to_vec();
    let mut snapshots = Vec::with_capacity(n + 1);
    snapshots.push((t0, curve.clone()));
    let mut resamples = 0usize;
    for step in 0..n {
        let t = t0 + h * step as f64;
        let t_next = t0 + h * (step + 1) as f64;
        pts = pts
            .par_iter()
            .map(|p| rk4_step(field, t, h, p))
            .collect::<Result<Vec<_>>>()?;
        if let Some(dom) = domain {
            for p in &pts {
                if !matches!(dom.contains(p), Ok(true)) {
                    return Err(Error::CurveLeftDomain {
                        t: t_next,
                        x: p.x,
                        y: p.y,
                    });
                }
            }
        }
        let mut snapshot = match JordanCurve::new(pts.clone()) {
            Ok(c) => c,
            Err(Error::InvalidCurve(msg)) if msg.contains("ratio") && resample => {
                // Spacing drifted past the invariant: restore by resampling.
                resamples += 1;
                resample_raw(&pts, m)?
            }
            Err(Error::InvalidCurve(msg)) if msg.contains("intersect") => {
                return Err(Error::SelfIntersection { t: t_next });
            }
            Err(e) => return Err(e),
        };
        if resample && snapshot.spacing_ratio() > 0.8 * MAX_SPACING_RATIO {
            resamples += 1;
            snapshot = snapshot.resample_by_arclength(m)?;
        }
        pts = snapshot.points().to_vec();
        snapshots.push((t_next, snapshot));
    }
    Ok(FlowMap {
        dt: h,
        snapshots,
        resamples,
    })
}

/// Arc-length resampling of a raw point loop (used when spacing has drifted
/// so far that curve validation rejects the polygon).
pub(crate) fn resample_raw(points: &[Point2<f64>], m: usize) -> Result<JordanCurve> {
    let n = points.len();
    let mut cum = Vec::with_capacity(n + 1);
    cum.push(0.0);
    for i in 0..n {
        let next = points[(i + 1) % n];
        cum.push(cum[i] + (next - points[i]).norm());
    }
    let total = *cum.last().expect("nonempty");
    let mut out = Vec::with_capacity(m);
    for k in 0..m {
        let s = total * k as f64 / m as f64;
        let seg = match cum.binary_search_by(|c| c.partial_cmp(&s).expect("finite")) {
            Ok(i) => i.min(n - 1),
            Err(i) => i - 1,
        };
        let frac = (s - cum[seg]) / (cum[seg + 1] - cum[seg]);
        out.push(points[seg] + (points[(seg + 1) % n] - points[seg]) * frac);
    }
    JordanCurve::new(out)
}

/// RK4-advects a curve and returns the final state; see [`advect_map`].
pub fn advect<F: VelocityField + ?Sized>(
    field: &F,
    curve: &JordanCurve,
    t0: f64,
    t1: f64,
    dt: f64,
    domain: Option<&Domain>,
    resample: bool,
) -> Result<JordanCurve> {
    let map = advect_map(field, curve, t0, t1, dt, domain, resample)?;
    Ok(map.snapshots.into_iter().last().expect("nonempty").1)
}

/// Central finite-difference divergence and gradient norm of a velocity
/// field, for solenoidality diagnostics.
pub fn fd_divergence<F: VelocityField + ?Sized>(
    field: &F,
    t: f64,
    x: &Point2<f64>,
    h: f64,
) -> Result<(f64, f64)> {
    let ex = Vector2::new(h, 0.0);
    let ey = Vector2::new(0.0, h);
    let uxp = field.velocity(t, &(x + ex))?;
    let uxm = field.velocity(t, &(x - ex))?;
    let uyp = field.velocity(t, &(x + ey))?;
    let uym = field.velocity(t, &(x - ey))?;
    let div = (uxp.x - uxm.x) / (2.0 * h) + (uyp.y - uym.y) / (2.0 * h);
    let grad = Matrix2::new(
        (uxp.x - uxm.x) / (2.0 * h),
        (uyp.x - uym.x) / (2.0 * h),
        (uxp.y - uxm.y) / (2.0 * h),
        (uyp.y - uym.y) / (2.0 * h),
    );
    Ok((div, grad.norm()))
}
