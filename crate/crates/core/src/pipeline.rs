//! End-to-end steering pipeline: build a model flow, synthesize boundary
//! controls at a partition-of-unity of time nodes, blend them into one
//! admissible field, advect the curve under the blend, and check the
//! result with an a-posteriori Gronwall bound.

use nalgebra::{Matrix2, Point2, Vector2};
use serde::{Deserialize, Serialize};

use crate::basis::{place_sources, FieldCoefficients, StokesBasis};
use crate::control::{synthesize, ControlProblem, SynthesizedControl};
use crate::error::{Error, Result};
use crate::geometry::{
    hausdorff_distance, parametric_distance, Domain, JordanCurve, TUBE_LAYER_OFFSETS,
};
use crate::model_flow::{
    advect, build_model_flow, FlowDescriptor, FlowScenario, ModelFlow, VelocityField,
};

/// How many times the ramp horizon is halved before giving up.
pub const MAX_RAMP_BISECTIONS: u32 = 5;

/// Gronwall acceptance slack: the observed deviation may exceed the bound
/// by at most this factor (absorbing time discretization of the estimate).
pub const GRONWALL_SLACK: f64 = 2.0;

/// Complete description of one steering run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub domain: Domain,
    pub gamma0: JordanCurve,
    pub gamma1: JordanCurve,
    pub scenario: FlowScenario,
    /// Sources per boundary component, outermost first.
    pub counts: Vec<usize>,
    /// Source ring offset from the boundary.
    pub offset: f64,
    /// Relative singular-value cutoff for all least-squares solves.
    pub tau_svd: f64,
    /// Number of time nodes for the partition of unity.
    pub nodes: usize,
    /// Half-width (in time) of each partition hat.
    pub eta: f64,
    /// Tube half-width for collocation around the reference curves.
    pub delta: f64,
    /// Advection time step.
    pub dt: f64,
    /// Weight ratio of homogeneous (no-leak) rows over match rows.
    pub weight_ratio: f64,
    /// Per-node synthesis residual threshold, relative to the node's
    /// largest target speed.
    pub residual_tol: f64,
    /// Minimum clearance both endpoint curves must keep from ∂Ω.
    pub clearance_margin: f64,
    /// Recorded for reproducibility of any seeded companion experiment.
    pub seed: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 time nodes, got {}",
                self.nodes
            )));
        }
        let spacing = 1.0 / (self.nodes - 1) as f64;
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "partition radius eta must be positive, got {}",
                self.eta
            )));
        }
        if spacing >= 2.0 * self.eta {
            return Err(Error::InvalidConfig(format!(
                "partition hats do not cover [0,1]: node spacing {spacing} \
                 must be smaller than 2·eta = {}",
                2.0 * self.eta
            )));
        }
        if !(self.dt.is_finite() && self.dt > 0.0 && self.dt <= spacing / 10.0) {
            return Err(Error::InvalidConfig(format!(
                "dt must lie in (0, node spacing / 10 = {}], got {}",
                spacing / 10.0,
                self.dt
            )));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tube width delta must be positive, got {}",
                self.delta
            )));
        }
        if !(self.tau_svd.is_finite() && self.tau_svd > 0.0 && self.tau_svd < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "tau_svd must lie in (0, 1), got {}",
                self.tau_svd
            )));
        }
        if !(self.weight_ratio.is_finite() && self.weight_ratio > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "weight_ratio must be positive, got {}",
                self.weight_ratio
            )));
        }
        if !(self.residual_tol.is_finite() && self.residual_tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "residual_tol must be positive, got {}",
                self.residual_tol
            )));
        }
        if !(self.clearance_margin.is_finite() && self.clearance_margin >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "clearance_margin must be nonnegative, got {}",
                self.clearance_margin
            )));
        }
        Ok(())
    }

    pub fn node_times(&self) -> Vec<f64> {
        (0..self.nodes)
            .map(|i| i as f64 / (self.nodes - 1) as f64)
            .collect()
    }
}

/// Quintic partition-of-unity hats on time nodes. Each raw hat is 1 on a
/// plateau |t−t_i| ≤ η_i/2, falls smoothly to 0 at |t−t_i| = η_i, and the
/// hats are normalized to sum to one.
#[derive(Debug, Clone)]
pub struct PartitionOfUnity {
    nodes: Vec<f64>,
    radii: Vec<f64>,
}

impl PartitionOfUnity {
    pub fn new(nodes: Vec<f64>, radii: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 || nodes.len() != radii.len() {
            return Err(Error::InvalidConfig(
                "partition needs matching node and radius lists (length ≥ 2)".into(),
            ));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig(
                "partition nodes must be strictly increasing".into(),
            ));
        }
        if nodes[0] != 0.0 || *nodes.last().expect("nonempty") != 1.0 {
            return Err(Error::InvalidConfig(
                "partition nodes must start at 0 and end at 1".into(),
            ));
        }
        if radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::InvalidConfig(
                "partition radii must be positive".into(),
            ));
        }
        for i in 0..nodes.len() - 1 {
            if nodes[i + 1] - nodes[i] >= radii[i] + radii[i + 1] {
                return Err(Error::InvalidConfig(format!(
                    "hats {i} and {} do not overlap: gap {} ≥ radii sum {}",
                    i + 1,
                    nodes[i + 1] - nodes[i],
                    radii[i] + radii[i + 1]
                )));
            }
        }
        Ok(Self { nodes, radii })
    }

    pub fn uniform(n: usize, eta: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 nodes, got {n}"
            )));
        }
        let nodes = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        Self::new(nodes, vec![eta; n])
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    /// Raw (unnormalized) hat profile: 1 on |s| ≤ ½, 0 at |s| ≥ 1, quintic
    /// smoothstep in between.
    pub fn raw_hat(s: f64) -> f64 {
        let arg = (2.0 * (1.0 - s.abs())).clamp(0.0, 1.0);
        arg * arg * arg * (10.0 - 15.0 * arg + 6.0 * arg * arg)
    }

    /// Normalized weights at time `t` (they sum to 1 for t in [0, 1]).
    pub fn weights(&self, t: f64) -> Vec<f64> {
        let mut raw: Vec<f64> = self
            .nodes
            .iter()
            .zip(&self.radii)
            .map(|(ti, eta)| Self::raw_hat((t - ti) / eta))
            .collect();
        let sum: f64 = raw.iter().sum();
        debug_assert!(sum > 0.0, "partition does not cover t = {t}");
        for w in &mut raw {
            *w /= sum;
        }
        raw
    }
}

/// Per-node boundary controls blended through the partition of unity.
/// Because every node control lives in the same basis, the blend is again
/// an exact divergence-free Stokes field with coefficients Σ κ_i(t)·c_i.
#[derive(Debug, Clone)]
pub struct BlendedControl {
    basis: StokesBasis,
    pou: PartitionOfUnity,
    node_coefficients: Vec<FieldCoefficients>,
}

impl BlendedControl {
    pub fn new(
        basis: StokesBasis,
        pou: PartitionOfUnity,
        node_coefficients: Vec<FieldCoefficients>,
    ) -> Result<Self> {
        if node_coefficients.len() != pou.len() {
            return Err(Error::InvalidConfig(format!(
                "{} node controls for {} partition nodes",
                node_coefficients.len(),
                pou.len()
            )));
        }
        for c in &node_coefficients {
            if c.len() != basis.len() {
                return Err(Error::SampleCountMismatch {
                    a: basis.len(),
                    b: c.len(),
                });
            }
        }
        Ok(Self {
            basis,
            pou,
            node_coefficients,
        })
    }

    pub fn basis(&self) -> &StokesBasis {
        &self.basis
    }

    pub fn partition(&self) -> &PartitionOfUnity {
        &self.pou
    }

    pub fn node_coefficients(&self) -> &[FieldCoefficients] {
        &self.node_coefficients
    }

    /// Coefficient blend at time `t`. Where a single hat is active the
    /// result is that node's coefficient vector, bit for bit.
    pub fn blended_coefficients(&self, t: f64) -> FieldCoefficients {
        let weights = self.pou.weights(t);
        let mut out = vec![0.0; self.basis.len()];
        for (w, c) in weights.iter().zip(&self.node_coefficients) {
            if *w == 0.0 {
                continue;
            } else if *w == 1.0 {
                return c.clone();
            }
            for (o, v) in out.iter_mut().zip(c.as_slice()) {
                *o += w * v;
            }
        }
        FieldCoefficients::new(out).expect("blend of finite coefficients is finite")
    }
}

impl VelocityField for BlendedControl {
    fn velocity(&self, t: f64, x: &Point2<f64>) -> Result<Vector2<f64>> {
        self.basis.eval_velocity(&self.blended_coefficients(t), x)
    }

    fn gradient(&self, t: f64, x: &Point2<f64>) -> Result<Matrix2<f64>> {
        self.basis.eval_gradient(&self.blended_coefficients(t), x)
    }
}

/// One row of the per-step diagnostics.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub t: f64,
    /// Enclosed area of the advected curve.
    pub area: f64,
    /// Minimum distance from the advected curve to ∂Ω.
    pub min_wall_distance: f64,
    /// max |U − X| over the (unclipped) tube of the reference curve.
    pub tube_error: f64,
    /// max ‖∇U‖_F over the same tube.
    pub max_grad_u: f64,
}

/// Advected trajectory with per-step diagnostics and final metrics.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<(f64, JordanCurve)>,
    pub diagnostics: Vec<DiagnosticRow>,
    pub final_hausdorff: f64,
    /// Node-wise distance to the target after optimal cyclic alignment;
    /// absent when sample counts differ or resampling broke node identity.
    pub final_parametric: Option<f64>,
    pub area_drift_rel: f64,
    pub resamples: usize,
}

/// Diagnostics CSV with one row per advection step.
pub fn diagnostics_to_csv(rows: &[DiagnosticRow]) -> String {
    let mut out = String::from("t,area,min_wall_distance,tube_error,max_grad_u\n");
    for r in rows {
        out.push_str(&format!(
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
            r.t, r.area, r.min_wall_distance, r.tube_error, r.max_grad_u
        ));
    }
    out
}

/// The synthesized control at one time node.
#[derive(Debug, Clone)]
pub struct NodeControl {
    pub t: f64,
    pub control: SynthesizedControl,
}

/// Start-up ramp metadata when running from a nonzero initial field.
#[derive(Debug, Clone)]
pub struct RampPhase {
    pub tau: f64,
    pub bisections: u32,
    pub u0: FieldCoefficients,
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub flow: FlowDescriptor,
    pub node_controls: Vec<NodeControl>,
    pub blended: BlendedControl,
    pub ramp: Option<RampPhase>,
}

impl RunOutput {
    pub fn basis(&self) -> &StokesBasis {
        self.blended.basis()
    }
}

/// Unclipped five-layer tube points around a curve (diagnostic tube: kept
/// whole even where it pokes past ∂Ω, since it only localizes suprema).
fn diagnostic_tube(curve: &JordanCurve, delta: f64) -> Vec<Point2<f64>> {
    let normals = curve.outward_normals();
    let mut pts = Vec::with_capacity(TUBE_LAYER_OFFSETS.len() * curve.len());
    for offset in TUBE_LAYER_OFFSETS {
        for (p, n) in curve.points().iter().zip(&normals) {
            pts.push(p + n * (offset * delta));
        }
    }
    pts
}

fn diagnostic_row(
    t: f64,
    curve_u: &JordanCurve,
    curve_x: &JordanCurve,
    u_field: &BlendedControl,
    x_flow: &ModelFlow,
    domain: &Domain,
    delta: f64,
) -> Result<DiagnosticRow> {
    let mut tube_error = 0.0f64;
    let mut max_grad = 0.0f64;
    let coeffs = u_field.blended_coefficients(t);
    for p in diagnostic_tube(curve_x, delta) {
        let u = u_field.basis().eval_velocity(&coeffs, &p)?;
        let x = x_flow.eval(t, &p);
        tube_error = tube_error.max((u - x).norm());
        max_grad = max_grad.max(u_field.basis().eval_gradient(&coeffs, &p)?.norm());
    }
    Ok(DiagnosticRow {
        t,
        area: curve_u.signed_area(),
        min_wall_distance: domain.curve_clearance(curve_u),
        tube_error,
        max_grad_u: max_grad,
    })
}

/// Residual-tolerance violation at one node, recorded by [`plan`].
#[derive(Debug, Clone, Copy)]
pub struct ResidualFailure {
    pub node: usize,
    pub residual: f64,
    pub tol: f64,
}

/// Everything the pipeline prepares before advecting anything: the model
/// flow, the reference curves at the time nodes, and every synthesized
/// node control blended into one field.
pub struct RunPlan {
    pub flow: ModelFlow,
    pub node_curves: Vec<JordanCurve>,
    pub node_controls: Vec<NodeControl>,
    pub blended: BlendedControl,
    /// Nodes whose synthesis residual exceeded the tolerance. [`run`]
    /// turns the first entry into a hard error; a batch front end can
    /// still persist the plan for inspection.
    pub residual_failures: Vec<ResidualFailure>,
}

/// Prepares a run: builds the model flow, advects the reference curve to
/// every time node, synthesizes one boundary control per node, and blends
/// them. Residual-tolerance violations are recorded, not fatal.
pub fn plan(config: &RunConfig) -> Result<RunPlan> {
    config.validate()?;
    let domain = &config.domain;
    let flow = build_model_flow(
        &config.gamma0,
        &config.gamma1,
        domain,
        config.scenario,
        config.clearance_margin,
    )?;

    // Reference curves at the partition nodes, advected under the model flow.
    let times = config.node_times();
    let mut node_curves = vec![config.gamma0.clone()];
    for w in times.windows(2) {
        let prev = node_curves.last().expect("nonempty");
        node_curves.push(advect(&flow, prev, w[0], w[1], config.dt, Some(domain), false)?);
    }

    // One basis for every node; controls are blended coefficient-wise.
    let basis = place_sources(domain, &config.counts, config.offset)?;
    let mut node_controls = Vec::with_capacity(times.len());
    let mut coefficients = Vec::with_capacity(times.len());
    let mut residual_failures = Vec::new();
    for (i, (t_i, curve)) in times.iter().zip(&node_curves).enumerate() {
        let t_node = *t_i;
        let problem = ControlProblem::tube_match(
            domain,
            curve,
            config.delta,
            |p| flow.eval(t_node, p),
            config.weight_ratio,
        )?;
        let control = synthesize(&problem, &basis, config.tau_svd)?;
        let tol = config.residual_tol * problem.max_target_speed();
        if control.residual_match > tol {
            residual_failures.push(ResidualFailure {
                node: i,
                residual: control.residual_match,
                tol,
            });
        }
        coefficients.push(control.coefficients.clone());
        node_controls.push(NodeControl {
            t: t_node,
            control,
        });
    }
    let pou = PartitionOfUnity::uniform(config.nodes, config.eta)?;
    let blended = BlendedControl::new(basis, pou, coefficients)?;
    Ok(RunPlan {
        flow,
        node_curves,
        node_controls,
        blended,
        residual_failures,
    })
}

fn advect_loop(
    config: &RunConfig,
    plan: &RunPlan,
    snapshots: &mut Vec<(f64, JordanCurve)>,
    diagnostics: &mut Vec<DiagnosticRow>,
    resamples: &mut usize,
) -> Result<()> {
    let domain = &config.domain;
    let n_steps = (1.0 / config.dt - 1e-9).ceil().max(1.0) as usize;
    let h = 1.0 / n_steps as f64;
    let m = config.gamma0.len();
    let mut pts_u = config.gamma0.points().to_vec();
    let mut pts_x = pts_u.clone();
    let mut curve_x = config.gamma0.clone();
    diagnostics.push(diagnostic_row(
        0.0,
        &config.gamma0,
        &curve_x,
        &plan.blended,
        &plan.flow,
        domain,
        config.delta,
    )?);
    for step in 0..n_steps {
        let t = h * step as f64;
        let t_next = h * (step + 1) as f64;
        pts_u = advance(&plan.blended, &pts_u, t, h)?;
        pts_x = advance(&plan.flow, &pts_x, t, h)?;
        for p in &pts_u {
            if !matches!(domain.contains(p), Ok(true)) {
                return Err(Error::CurveLeftDomain {
                    t: t_next,
                    x: p.x,
                    y: p.y,
                });
            }
        }
        let mut curve_u = match JordanCurve::new(pts_u.clone()) {
            Ok(c) => c,
            Err(Error::InvalidCurve(msg)) if msg.contains("ratio") => {
                *resamples += 1;
                crate::model_flow::resample_raw(&pts_u, m)?
            }
            Err(Error::InvalidCurve(msg)) if msg.contains("intersect") => {
                return Err(Error::SelfIntersection { t: t_next });
            }
            Err(e) => return Err(e),
        };
        if curve_u.spacing_ratio() > 0.8 * crate::geometry::MAX_SPACING_RATIO {
            *resamples += 1;
            curve_u = curve_u.resample_by_arclength(m)?;
        }
        pts_u = curve_u.points().to_vec();
        curve_x = JordanCurve::new(pts_x.clone())?;
        diagnostics.push(diagnostic_row(
            t_next,
            &curve_u,
            &curve_x,
            &plan.blended,
            &plan.flow,
            domain,
            config.delta,
        )?);
        snapshots.push((t_next, curve_u));
    }
    Ok(())
}

/// Advects gamma0 under the planned blended control, tracking the model
/// flow on the same grid for diagnostics. Always returns the trajectory it
/// managed to produce: on an early abort (curve left the domain,
/// self-intersected, ...) the error slot is set and the trajectory covers
/// the steps before the abort, so callers can persist partial output. The
/// final metrics always refer to the last recorded snapshot.
pub fn advect_plan(config: &RunConfig, plan: &RunPlan) -> (Trajectory, Option<Error>) {
    let mut snapshots = vec![(0.0, config.gamma0.clone())];
    let mut diagnostics = Vec::new();
    let mut resamples = 0usize;
    let error = advect_loop(config, plan, &mut snapshots, &mut diagnostics, &mut resamples).err();

    let final_curve = &snapshots.last().expect("nonempty").1;
    let final_hausdorff = hausdorff_distance(final_curve, &config.gamma1);
    // Resampling breaks node identity, so the node-wise metric only makes
    // sense on an unresampled trajectory.
    let final_parametric = if resamples == 0 {
        parametric_distance(final_curve, &config.gamma1, 0).ok()
    } else {
        None
    };
    let area0 = config.gamma0.signed_area();
    let area_drift_rel = (final_curve.signed_area() - area0).abs() / area0;
    let trajectory = Trajectory {
        snapshots,
        diagnostics,
        final_hausdorff,
        final_parametric,
        area_drift_rel,
        resamples,
    };
    (trajectory, error)
}

/// Runs the full pipeline. Fails with `SynthesisResidualTooLarge` when a
/// node control misses its target beyond `residual_tol` (relative to the
/// node's largest target speed), and with the advection errors when the
/// curve degenerates or leaves Ω mid-run.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    let plan = plan(config)?;
    if let Some(f) = plan.residual_failures.first() {
        return Err(Error::SynthesisResidualTooLarge {
            node: f.node,
            residual: f.residual,
            tol: f.tol,
        });
    }
    let (trajectory, error) = advect_plan(config, &plan);
    if let Some(e) = error {
        return Err(e);
    }
    Ok(RunOutput {
        trajectory,
        flow: plan.flow.descriptor(),
        node_controls: plan.node_controls,
        blended: plan.blended,
        ramp: None,
    })
}

/// One synchronized RK4 step of a point set.
fn advance<F: VelocityField + ?Sized>(
    field: &F,
    pts: &[Point2<f64>],
    t: f64,
    h: f64,
) -> Result<Vec<Point2<f64>>> {
    use rayon::prelude::*;
    pts.par_iter()
        .map(|p| {
            let k1 = field.velocity(t, p)?;
            let k2 = field.velocity(t + 0.5 * h, &(p + k1 * (0.5 * h)))?;
            let k3 = field.velocity(t + 0.5 * h, &(p + k2 * (0.5 * h)))?;
            let k4 = field.velocity(t + h, &(p + k3 * h))?;
            Ok(p + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
        })
        .collect()
}

/// A-posteriori Gronwall certificate for a run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GronwallReport {
    /// Largest observed node-wise deviation between the curve advected
    /// under `u_field` and under `x_field`.
    pub lhs: f64,
    /// sup-mismatch × exp(Lipschitz integral): the certified bound.
    pub rhs: f64,
    /// max over time of sup |U − X| on the reference tube.
    pub sup_mismatch: f64,
    /// ∫ max ‖∇U‖ dt over the reference tube (trapezoid in time).
    pub lipschitz_integral: f64,
    pub pass: bool,
}

/// Recomputes both material trajectories from the run's initial curve on
/// the trajectory's own time grid (no resampling, so points keep their
/// identity) and compares the observed deviation with the Gronwall bound
/// sup|U−X| · exp(∫ max‖∇U‖ dt), both suprema over the unclipped tube of
/// the reference path.
pub fn verify_gronwall<X, U>(
    trajectory: &Trajectory,
    x_field: &X,
    u_field: &U,
    delta: f64,
    domain: Option<&Domain>,
) -> Result<GronwallReport>
where
    X: VelocityField + ?Sized,
    U: VelocityField + ?Sized,
{
    if trajectory.snapshots.len() < 2 {
        return Err(Error::IncompleteTrajectory(format!(
            "need at least 2 snapshots, got {}",
            trajectory.snapshots.len()
        )));
    }
    let times: Vec<f64> = trajectory.snapshots.iter().map(|(t, _)| *t).collect();
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::IncompleteTrajectory(
            "snapshot times must be strictly increasing".into(),
        ));
    }
    let gamma0 = &trajectory.snapshots[0].1;
    let mut pts_u = gamma0.points().to_vec();
    let mut pts_x = pts_u.clone();

    let tube_stats = |pts: &[Point2<f64>], t: f64| -> Result<(f64, f64)> {
        let curve = JordanCurve::new(pts.to_vec())?;
        let mut mismatch = 0.0f64;
        let mut lip = 0.0f64;
        for p in diagnostic_tube(&curve, delta) {
            let du = u_field.velocity(t, &p)? - x_field.velocity(t, &p)?;
            mismatch = mismatch.max(du.norm());
            lip = lip.max(u_field.gradient(t, &p)?.norm());
        }
        Ok((mismatch, lip))
    };

    let (mut sup_mismatch, mut lip_prev) = tube_stats(&pts_x, times[0])?;
    let mut lipschitz_integral = 0.0;
    let mut lhs = 0.0f64;
    for w in times.windows(2) {
        let (t, t_next) = (w[0], w[1]);
        let h = t_next - t;
        pts_u = advance(u_field, &pts_u, t, h)?;
        pts_x = advance(x_field, &pts_x, t, h)?;
        if let Some(dom) = domain {
            for p in pts_u.iter().chain(&pts_x) {
                if !matches!(dom.contains(p), Ok(true)) {
                    return Err(Error::CurveLeftDomain {
                        t: t_next,
                        x: p.x,
                        y: p.y,
                    });
                }
            }
        }
        let gap = pts_u
            .iter()
            .zip(&pts_x)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        lhs = lhs.max(gap);
        let (mismatch, lip) = tube_stats(&pts_x, t_next)?;
        sup_mismatch = sup_mismatch.max(mismatch);
        lipschitz_integral += 0.5 * h * (lip_prev + lip);
        lip_prev = lip;
    }
    let rhs = sup_mismatch * lipschitz_integral.exp();
    Ok(GronwallReport {
        lhs,
        rhs,
        sup_mismatch,
        lipschitz_integral,
        pass: lhs <= GRONWALL_SLACK * rhs,
    })
}

/// The velocity field a full run actually applies, ramp included: the
/// decaying ambient on [0, τ], then the blended control on the rescaled
/// clock s = (t − τ)/(1 − τ), sped up by 1/(1 − τ). Without a ramp it is
/// the blended control itself.
pub struct RealizedControlField<'a> {
    pub blended: &'a BlendedControl,
    pub ramp: Option<&'a RampPhase>,
}

impl VelocityField for RealizedControlField<'_> {
    fn velocity(&self, t: f64, x: &Point2<f64>) -> Result<Vector2<f64>> {
        match self.ramp {
            None => self.blended.velocity(t, x),
            Some(ramp) if t < ramp.tau => {
                let r = ((ramp.tau - t) / ramp.tau).clamp(0.0, 1.0);
                Ok(self.blended.basis().eval_velocity(&ramp.u0, x)? * (r * r))
            }
            Some(ramp) => {
                let s = (t - ramp.tau) / (1.0 - ramp.tau);
                Ok(self.blended.velocity(s, x)? / (1.0 - ramp.tau))
            }
        }
    }

    fn gradient(&self, t: f64, x: &Point2<f64>) -> Result<Matrix2<f64>> {
        match self.ramp {
            None => self.blended.gradient(t, x),
            Some(ramp) if t < ramp.tau => {
                let r = ((ramp.tau - t) / ramp.tau).clamp(0.0, 1.0);
                Ok(self.blended.basis().eval_gradient(&ramp.u0, x)? * (r * r))
            }
            Some(ramp) => {
                let s = (t - ramp.tau) / (1.0 - ramp.tau);
                Ok(self.blended.gradient(s, x)? / (1.0 - ramp.tau))
            }
        }
    }
}

/// The reference plan on the same physical clock as
/// [`RealizedControlField`]: during a ramp the plan IS the decaying
/// ambient (the blob drifts passively by design), afterwards the model
/// flow on the rescaled clock.
pub struct RealizedPlanField<'a> {
    pub flow: &'a ModelFlow,
    pub basis: &'a StokesBasis,
    pub ramp: Option<&'a RampPhase>,
}

impl VelocityField for RealizedPlanField<'_> {
    fn velocity(&self, t: f64, x: &Point2<f64>) -> Result<Vector2<f64>> {
        match self.ramp {
            None => Ok(self.flow.eval(t, x)),
            Some(ramp) if t < ramp.tau => {
                let r = ((ramp.tau - t) / ramp.tau).clamp(0.0, 1.0);
                Ok(self.basis.eval_velocity(&ramp.u0, x)? * (r * r))
            }
            Some(ramp) => {
                let s = (t - ramp.tau) / (1.0 - ramp.tau);
                Ok(self.flow.eval(s, x) / (1.0 - ramp.tau))
            }
        }
    }
}

/// The decaying ambient field during the start-up ramp: coefficients u0
/// scaled by (τ−t)²/τ².
struct RampField<'a> {
    basis: &'a StokesBasis,
    coeffs: &'a FieldCoefficients,
    tau: f64,
}

impl VelocityField for RampField<'_> {
    fn velocity(&self, t: f64, x: &Point2<f64>) -> Result<Vector2<f64>> {
        let r = ((self.tau - t) / self.tau).clamp(0.0, 1.0);
        Ok(self.basis.eval_velocity(self.coeffs, x)? * (r * r))
    }

    fn gradient(&self, t: f64, x: &Point2<f64>) -> Result<Matrix2<f64>> {
        let r = ((self.tau - t) / self.tau).clamp(0.0, 1.0);
        Ok(self.basis.eval_gradient(self.coeffs, x)? * (r * r))
    }
}

/// Runs the pipeline from a nonzero initial ambient field `u0` (given in
/// the basis the configuration places). Phase one lets the ambient decay
/// over a ramp horizon `tau` while the blob drifts passively; the horizon
/// is halved up to [`MAX_RAMP_BISECTIONS`] times if the blob gets too close
/// to ∂Ω. Phase two steers the drifted blob to the target on the remaining
/// time, rescaled to unit speed. With `u0 = 0` this reduces to [`run`]
/// exactly.
pub fn run_with_initial_condition(
    config: &RunConfig,
    u0: &FieldCoefficients,
    tau0: f64,
) -> Result<RunOutput> {
    config.validate()?;
    if u0.as_slice().iter().all(|&c| c == 0.0) {
        return run(config);
    }
    if !(tau0.is_finite() && tau0 > 0.0 && tau0 < 1.0) {
        return Err(Error::OutOfRange(format!(
            "ramp horizon must lie in (0, 1), got {tau0}"
        )));
    }
    let basis = place_sources(&config.domain, &config.counts, config.offset)?;
    if u0.len() != basis.len() {
        return Err(Error::SampleCountMismatch {
            a: basis.len(),
            b: u0.len(),
        });
    }

    // Find a ramp horizon the blob survives.
    let mut tau = tau0;
    let mut accepted = None;
    for k in 0..=MAX_RAMP_BISECTIONS {
        let field = RampField {
            basis: &basis,
            coeffs: u0,
            tau,
        };
        let dt = config.dt.min(tau / 10.0);
        match crate::model_flow::advect_map(
            &field,
            &config.gamma0,
            0.0,
            tau,
            dt,
            Some(&config.domain),
            false,
        ) {
            Ok(map)
                if config.domain.curve_clearance(map.final_curve())
                    >= config.clearance_margin =>
            {
                accepted = Some((map, tau, k));
                break;
            }
            Ok(_) | Err(Error::CurveLeftDomain { .. }) => {
                tau *= 0.5;
            }
            Err(e) => return Err(e),
        }
    }
    let Some((ramp_map, tau, bisections)) = accepted else {
        return Err(Error::BlobEscapesDuringRamp {
            bisections: MAX_RAMP_BISECTIONS,
        });
    };

    // Ramp diagnostics: the realized field IS the decaying ambient, so the
    // mismatch against the plan is zero; record its gradient scale.
    let ramp_field = RampField {
        basis: &basis,
        coeffs: u0,
        tau,
    };
    let mut diagnostics = Vec::with_capacity(ramp_map.snapshots.len());
    for (t, curve) in &ramp_map.snapshots {
        let mut max_grad = 0.0f64;
        for p in diagnostic_tube(curve, config.delta) {
            max_grad = max_grad.max(ramp_field.gradient(*t, &p)?.norm());
        }
        diagnostics.push(DiagnosticRow {
            t: *t,
            area: curve.signed_area(),
            min_wall_distance: config.domain.curve_clearance(curve),
            tube_error: 0.0,
            max_grad_u: max_grad,
        });
    }

    // Phase two: steer the drifted blob on the rescaled clock.
    let sub_config = RunConfig {
        gamma0: ramp_map.final_curve().clone(),
        ..config.clone()
    };
    let sub = run(&sub_config)?;
    let scale = 1.0 / (1.0 - tau);
    let remap = |s: f64| tau + (1.0 - tau) * s;

    let mut snapshots = ramp_map.snapshots.clone();
    for (s, curve) in sub.trajectory.snapshots.iter().skip(1) {
        snapshots.push((remap(*s), curve.clone()));
    }
    for row in sub.trajectory.diagnostics.iter().skip(1) {
        diagnostics.push(DiagnosticRow {
            t: remap(row.t),
            area: row.area,
            min_wall_distance: row.min_wall_distance,
            // Phase-two velocities live on the rescaled clock; report them
            // in physical time units.
            tube_error: row.tube_error * scale,
            max_grad_u: row.max_grad_u * scale,
        });
    }

    let area0 = config.gamma0.signed_area();
    let final_curve = &snapshots.last().expect("nonempty").1;
    let area_drift_rel = (final_curve.signed_area() - area0).abs() / area0;
    let trajectory = Trajectory {
        snapshots,
        diagnostics,
        final_hausdorff: sub.trajectory.final_hausdorff,
        final_parametric: sub.trajectory.final_parametric,
        area_drift_rel,
        resamples: sub.trajectory.resamples,
    };
    Ok(RunOutput {
        trajectory,
        flow: sub.flow,
        node_controls: sub.node_controls,
        blended: sub.blended,
        ramp: Some(RampPhase {
            tau,
            bisections,
            u0: u0.clone(),
        }),
    })
}
