//! Acceptance suite: one test per externally checkable guarantee.
//!
//! Every test prints a single `acceptance <name>: PASS/FAIL — <numbers>`
//! line before asserting, so a full run of this target doubles as a
//! conformance report. The heavyweight end-to-end run is shared between
//! tests through a `OnceLock`.

use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Point2, Vector2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use stokes_lagrange::approximation::region_counts;
use stokes_lagrange::basis::{place_sources, FieldCoefficients, StokesBasis};
use stokes_lagrange::control::{flux, synthesize, ControlProblem};
use stokes_lagrange::geometry::{
    parametric_distance, CollocationSet, Domain, JordanCurve, SigmaArc,
};
use stokes_lagrange::model_flow::{advect, build_model_flow, FlowScenario, ModelFlow, VelocityField};
use stokes_lagrange::pipeline::{
    run, run_with_initial_condition, verify_gronwall, RealizedControlField, RunConfig, RunOutput,
};
use stokes_lagrange::scenario::{ControlFile, TrajectoryFile};

fn report(name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("acceptance {name}: {verdict} — {detail}");
    assert!(pass, "{name}: {detail}");
}

/// Unit disk with the controllable arc on the right half of the boundary
/// (the half centered on (1, 0); the left half carries the no-leak
/// condition).
fn standard_domain() -> Domain {
    Domain::new(
        JordanCurve::circle(Point2::origin(), 1.0, 256).unwrap(),
        vec![],
        vec![SigmaArc {
            component: 0,
            t0: 0.75,
            t1: 0.25,
        }],
    )
    .unwrap()
}

/// The reference end-to-end problem: translate a small blob across the disk,
/// controlling only the right half of the boundary.
///
/// With half the boundary uncontrolled, the per-node match residual floors
/// near 0.09 (absolute, target speeds ~0.27): the floor is set by how much of
/// the least-squares spectrum double precision can use, not by the basis —
/// 128 and 256 sources give the same number at any truncation depth, while
/// the end-to-end tracking error stays two orders below the acceptance gate.
/// `residual_tol` is therefore a loose blow-up guard here, not a precision
/// assertion.
fn standard_config() -> RunConfig {
    standard_config_sized(vec![128], 8)
}

fn standard_config_sized(counts: Vec<usize>, nodes: usize) -> RunConfig {
    RunConfig {
        domain: standard_domain(),
        gamma0: JordanCurve::circle(Point2::new(-0.3, 0.0), 0.2, 128).unwrap(),
        gamma1: JordanCurve::circle(Point2::new(0.3, 0.0), 0.2, 128).unwrap(),
        scenario: FlowScenario::Translation,
        counts,
        offset: 0.15,
        tau_svd: 1e-10,
        nodes,
        eta: 0.6 / (nodes - 1) as f64,
        delta: 0.05,
        dt: 5e-3,
        weight_ratio: 3.0,
        residual_tol: 0.5,
        clearance_margin: 0.02,
        seed: 425,
    }
}

struct Standard {
    config: RunConfig,
    output: RunOutput,
    elapsed_s: f64,
}

fn standard() -> &'static Standard {
    static CELL: OnceLock<Standard> = OnceLock::new();
    CELL.get_or_init(|| {
        let config = standard_config();
        let t = Instant::now();
        let output = run(&config).expect("standard end-to-end run");
        Standard {
            config,
            output,
            elapsed_s: t.elapsed().as_secs_f64(),
        }
    })
}

/// Uniform rejection sample of `n` interior points.
fn interior_points(domain: &Domain, n: usize, rng: &mut ChaCha8Rng) -> Vec<Point2<f64>> {
    let outer = domain.outer().points();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in outer {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    let mut pts = Vec::with_capacity(n);
    while pts.len() < n {
        let p = Point2::new(rng.random_range(x0..x1), rng.random_range(y0..y1));
        if domain.contains(&p).unwrap() {
            pts.push(p);
        }
    }
    pts
}

fn random_unit_coefficients(n: usize, rng: &mut ChaCha8Rng) -> FieldCoefficients {
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    for c in &mut v {
        *c /= norm;
    }
    FieldCoefficients::new(v).unwrap()
}

/// Worst momentum-residual norm and divergence over points × coefficients.
fn worst_stokes_residual(
    basis: &StokesBasis,
    coeffs: &[FieldCoefficients],
    points: &[Point2<f64>],
    h: f64,
) -> (f64, f64) {
    coeffs
        .iter()
        .map(|c| {
            points
                .par_iter()
                .map(|p| {
                    let (momentum, div) = basis.stokes_residual(c, p, h).unwrap();
                    (momentum.norm(), div.abs())
                })
                .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)))
        })
        .fold((0.0_f64, 0.0_f64), |a, b| (a.0.max(b.0), a.1.max(b.1)))
}

// ---------------------------------------------------------------------------
// 1. Every basis field solves the stationary Stokes equations in the fluid.
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_basis_fields_solve_stokes() {
    let start = Instant::now();
    let disk = Domain::no_control(
        JordanCurve::circle(Point2::origin(), 1.0, 256).unwrap(),
        vec![],
    )
    .unwrap();
    let annulus = Domain::no_control(
        JordanCurve::circle(Point2::origin(), 1.0, 256).unwrap(),
        vec![JordanCurve::circle(Point2::origin(), 0.5, 128).unwrap()],
    )
    .unwrap();

    let h = 1e-4;
    let tol = 1e-6;
    let mut worst_m = 0.0_f64;
    let mut worst_d = 0.0_f64;
    for (seed, domain) in [(7_u64, &disk), (8, &annulus)] {
        let basis = place_sources(domain, &region_counts(domain, 32), 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs: Vec<FieldCoefficients> = (0..20)
            .map(|_| random_unit_coefficients(basis.len(), &mut rng))
            .collect();
        let points = interior_points(domain, 1000, &mut rng);
        let (m, d) = worst_stokes_residual(&basis, &coeffs, &points, h);
        worst_m = worst_m.max(m);
        worst_d = worst_d.max(d);
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = worst_m <= tol && worst_d <= tol && elapsed <= 10.0;
    report(
        "basis fields solve Stokes",
        pass,
        &format!(
            "max |momentum residual| {worst_m:.3e}, max |divergence| {worst_d:.3e} \
             (tol {tol:.0e}) over 2 domains x 20 unit fields x 1000 interior points, \
             {elapsed:.1}s (cap 10s)"
        ),
    );
}

// ---------------------------------------------------------------------------
// 2. Synthesized controls conserve mass: zero net flux through the full
//    boundary, and the leak through the controllable arc is bounded by the
//    no-leak residual integrated over the complement.
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_controls_conserve_mass() {
    let s = standard();
    let quad = s.config.domain.boundary_quadrature();
    let basis = s.output.basis();
    // The controllable arc covers the right half of the outer component in
    // the standard setup, so the complement has half of the length.
    let complement_len = 0.5 * s.config.domain.component_length(0);

    // Independent complement quadrature at a spacing unrelated to the one
    // behind the stored sigma_flux diagnostic. The flux through the arc is
    // checked through the divergence identity (flux_sigma = -flux_complement);
    // the trace on the arc itself is unconstrained by the synthesis and
    // oscillates far too finely for a direct quadrature to converge.
    let comp = s.config.domain.sample_complement(1e-3);

    let mut worst_total = 0.0_f64;
    let mut worst_excess = f64::MIN;
    let mut worst_dev = f64::MIN;
    for nc in &s.output.node_controls {
        let vels: Vec<Vector2<f64>> = quad
            .points()
            .iter()
            .map(|p| basis.eval_velocity(&nc.control.coefficients, p).unwrap())
            .collect();
        let total = flux(&quad, &vels).unwrap();
        worst_total = worst_total.max(total.abs());
        let independent_flux: f64 = -comp
            .iter()
            .map(|b| {
                basis
                    .eval_velocity(&nc.control.coefficients, &b.point)
                    .unwrap()
                    .dot(&b.normal)
                    * b.weight
            })
            .sum::<f64>();
        let leak_bound = complement_len * nc.control.residual_homogeneous + 1e-10;
        worst_excess = worst_excess.max(nc.control.sigma_flux.abs() - leak_bound);
        worst_excess = worst_excess.max(independent_flux.abs() - leak_bound);
        // The two quadratures may differ by their trapezoid errors, which
        // scale with the leak amplitude; 5% of the leak bound covers that
        // with margin while staying far below the bound itself.
        let agree_tol = 0.05 * complement_len * nc.control.residual_homogeneous + 1e-12;
        worst_dev = worst_dev.max((nc.control.sigma_flux - independent_flux).abs() - agree_tol);
    }
    let pass = worst_total <= 1e-10 && worst_excess <= 0.0 && worst_dev <= 0.0;
    report(
        "controls conserve mass",
        pass,
        &format!(
            "max |net boundary flux| {worst_total:.3e} (tol 1e-10) over {} node controls; \
             worst arc-leak excess over bound {worst_excess:.3e} (must be <= 0); \
             worst sigma-flux disagreement with independent quadrature {worst_dev:.3e} \
             (must be <= 0)",
            s.output.node_controls.len()
        ),
    );
}

// ---------------------------------------------------------------------------
// 3. Quadrupling the source density cuts the tube-match residual to at most
//    0.3x, and both residuals agree with an independent dense
//    normal-equations solve to within 10%.
// ---------------------------------------------------------------------------

/// Assemble the row-weighted least-squares system exactly as synthesis does:
/// match rows carry sqrt(w/mean_match), no-leak rows sqrt(ratio*w/mean_hom).
fn weighted_system(problem: &ControlProblem, basis: &StokesBasis) -> (DMatrix<f64>, DVector<f64>) {
    let mean = |set: &CollocationSet| set.total_weight() / set.len() as f64;
    let m_set = problem.match_set();
    let h_set = problem.homogeneous_set();
    let m_mean = mean(m_set);
    let h_mean = mean(h_set);
    let rows = 2 * (m_set.len() + h_set.len());
    let mut a = DMatrix::zeros(rows, basis.len());
    let mut b = DVector::zeros(rows);
    let mut r = 0;
    for ((p, v), w) in m_set
        .points()
        .iter()
        .zip(problem.match_velocities())
        .zip(m_set.weights())
    {
        let sc = (w / m_mean).sqrt();
        for (j, col) in basis.velocity_columns(p).unwrap().iter().enumerate() {
            a[(r, j)] = sc * col.x;
            a[(r + 1, j)] = sc * col.y;
        }
        b[r] = sc * v.x;
        b[r + 1] = sc * v.y;
        r += 2;
    }
    for (p, w) in h_set.points().iter().zip(h_set.weights()) {
        let sc = (problem.weight_ratio() * w / h_mean).sqrt();
        for (j, col) in basis.velocity_columns(p).unwrap().iter().enumerate() {
            a[(r, j)] = sc * col.x;
            a[(r + 1, j)] = sc * col.y;
        }
        r += 2;
    }
    (a, b)
}

/// Independent oracle: dense normal-equations solve on a 10x-denser tube.
/// The Gram matrix A^T A is formed explicitly and inverted through its
/// symmetric eigendecomposition, truncated at the matched relative level
/// `cut` — a genuinely different assembly and factorization path from the
/// production solver's direct SVD of A.
///
/// Squaring into A^T A erases all singular directions below
/// sqrt(eps) * smax ~ 1.5e-8, so the comparison is made at cut = 1e-8, the
/// deepest level at which a double-precision normal-equations solve still
/// represents the problem. (Below that the Gram matrix loses definiteness
/// to rounding: a ridge of (3e-9 * smax)^2 already fails Cholesky.)
fn oracle_residual(problem: &ControlProblem, basis: &StokesBasis, cut: f64) -> f64 {
    let (a, b) = weighted_system(problem, basis);
    let g = a.transpose() * &a;
    let rhs = a.transpose() * &b;
    let eig = nalgebra::SymmetricEigen::new(g);
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let floor = cut * cut * lmax;
    let mut x = DVector::zeros(a.ncols());
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l >= floor {
            let v = eig.eigenvectors.column(i);
            x += v * (v.dot(&rhs) / l);
        }
    }
    let coeffs = FieldCoefficients::from_dvector(&x).unwrap();
    problem
        .match_set()
        .points()
        .iter()
        .zip(problem.match_velocities())
        .map(|(p, v)| (basis.eval_velocity(&coeffs, p).unwrap() - v).norm())
        .fold(0.0, f64::max)
}

#[test]
fn criterion_3_residual_drops_with_source_density() {
    let domain = standard_domain();
    let curve = JordanCurve::circle(Point2::origin(), 0.2, 64).unwrap();
    let target = |_: &Point2<f64>| Vector2::new(1.0, 0.0);
    let (delta, ratio_w, offset) = (0.05, 3.0, 0.15);
    let problem = ControlProblem::tube_match(&domain, &curve, delta, target, ratio_w).unwrap();

    let basis32 = place_sources(&domain, &[32], offset).unwrap();
    let basis128 = place_sources(&domain, &[128], offset).unwrap();
    let t = Instant::now();
    // Convergence pair at the production truncation depth.
    let coarse = synthesize(&problem, &basis32, 1e-10).unwrap();
    let fine = synthesize(&problem, &basis128, 1e-10).unwrap();
    // Verification pair at the normal-equations trust depth (see
    // `oracle_residual`): the residual of this problem keeps improving with
    // truncation depth all the way to the rounding floor, so two different
    // solvers are only comparable at a matched cutoff.
    let ne_cut = 1e-8;
    let coarse_ne = synthesize(&problem, &basis32, ne_cut).unwrap();
    let fine_ne = synthesize(&problem, &basis128, ne_cut).unwrap();
    let elapsed = t.elapsed().as_secs_f64();

    let r32 = coarse.residual_match;
    let r128 = fine.residual_match;
    let ratio = r128 / r32;

    // Independent dense check at 10x the collocation density.
    let dense_curve = JordanCurve::circle(Point2::origin(), 0.2, 640).unwrap();
    let dense = ControlProblem::tube_match(&domain, &dense_curve, delta, target, ratio_w).unwrap();
    let o32 = oracle_residual(&dense, &basis32, ne_cut);
    let o128 = oracle_residual(&dense, &basis128, ne_cut);
    let agree32 = (o32 / coarse_ne.residual_match - 1.0).abs();
    let agree128 = (o128 / fine_ne.residual_match - 1.0).abs();

    // Frozen reference values from the first verified run of this exact
    // configuration; a regression outside the band means the solver changed.
    let (fix32, fix128, band) = (1.3034e-1, 2.7832e-2, 0.15);
    let drift32 = (r32 / fix32 - 1.0).abs();
    let drift128 = (r128 / fix128 - 1.0).abs();

    let pass = ratio <= 0.3
        && agree32 <= 0.10
        && agree128 <= 0.10
        && drift32 <= band
        && drift128 <= band
        && elapsed <= 30.0;
    report(
        "residual drops with source density",
        pass,
        &format!(
            "residual 32 sources {r32:.4e}, 128 sources {r128:.4e}, ratio {ratio:.3} \
             (need <= 0.3); dense normal-equations agreement at matched depth \
             {agree32:.2}% / {agree128:.2}% (need <= 10%); drift from frozen values \
             {drift32:.1}% / {drift128:.1}%; solves {elapsed:.1}s (cap 30s)",
            agree32 = agree32 * 100.0,
            agree128 = agree128 * 100.0,
            drift32 = drift32 * 100.0,
            drift128 = drift128 * 100.0,
        ),
    );
}

// ---------------------------------------------------------------------------
// 4. The model flow carries the start curve onto the target under RK4
//    advection, conserves area, and the integrator shows 4th-order decay.
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_model_flow_reaches_target() {
    let cfg = standard_config();
    let flow = build_model_flow(
        &cfg.gamma0,
        &cfg.gamma1,
        &cfg.domain,
        FlowScenario::Translation,
        cfg.clearance_margin,
    )
    .unwrap();

    let image = advect(&flow, &cfg.gamma0, 0.0, 1.0, 5e-3, Some(&cfg.domain), false).unwrap();
    let dist = parametric_distance(&image, &cfg.gamma1, 0).unwrap();
    let dist_tol = 1e-3 * cfg.domain.diameter();
    let a0 = cfg.gamma0.signed_area().abs();
    let drift = (image.signed_area().abs() - a0).abs() / a0;

    // Integrator order: halving dt must cut the error by ~2^4 against a
    // dt=1e-4 reference (>= 8 allows for measurement noise).
    let reference = advect(&flow, &cfg.gamma0, 0.0, 1.0, 1e-4, Some(&cfg.domain), false).unwrap();
    let err = |dt: f64| {
        let c = advect(&flow, &cfg.gamma0, 0.0, 1.0, dt, Some(&cfg.domain), false).unwrap();
        parametric_distance(&c, &reference, 0).unwrap()
    };
    let e2 = err(2e-2);
    let e1 = err(1e-2);
    let order_ratio = e2 / e1;

    let pass = dist <= dist_tol && drift <= 1e-4 && order_ratio >= 8.0;
    report(
        "model flow reaches target",
        pass,
        &format!(
            "final parametric distance {dist:.3e} (tol {dist_tol:.1e}), relative area \
             drift {drift:.3e} (tol 1e-4), error ratio e(2dt)/e(dt) {order_ratio:.1} \
             (need >= 8, 4th order ~16)"
        ),
    );
}

// ---------------------------------------------------------------------------
// 5. End to end: the controlled run tracks the target within 5% of the
//    domain scale, never touches the wall, conserves area, and the
//    discretization is resolved — halving it breaks tracking, doubling it
//    stays at the converged floor.
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_end_to_end_tracking() {
    let s = standard();
    let traj = &s.output.trajectory;
    let min_wall = traj
        .diagnostics
        .iter()
        .map(|d| d.min_wall_distance)
        .fold(f64::INFINITY, f64::min);

    // Refinement efficacy, downward: at half the source count and node count
    // the synthesized field is unresolved away from the collocation points
    // and the advected blob must either leave the domain (abort) or track
    // strictly worse. This pins the standard resolution as load-bearing.
    let halved = run(&standard_config_sized(vec![64], 4));
    let (halved_ok, halved_note) = match &halved {
        Err(e) => (true, format!("aborted ({e})")),
        Ok(out) => (
            out.trajectory.final_hausdorff > traj.final_hausdorff,
            format!("Hausdorff {:.3e}", out.trajectory.final_hausdorff),
        ),
    };

    // Refinement stability, upward: doubling sources and nodes must complete,
    // meet the same tracking gate, and stay within 15% of the standard error.
    // At this resolution the error is pinned by the f64-usable part of the
    // least-squares spectrum, not by density, so "within the floor" is the
    // honest convergence statement — strict monotone improvement is not
    // available in double precision (both runs sit at ~7-8e-3 for any
    // truncation threshold).
    let t = Instant::now();
    let doubled = run(&standard_config_sized(vec![256], 16)).expect("doubled-resolution run");
    let doubled_elapsed = t.elapsed().as_secs_f64();
    let dh = doubled.trajectory.final_hausdorff;
    let doubled_ok = dh <= 0.05 && dh <= 1.15 * traj.final_hausdorff;

    let pass = traj.final_hausdorff <= 0.05
        && min_wall > 0.0
        && traj.area_drift_rel <= 1e-3
        && s.elapsed_s <= 300.0
        && halved_ok
        && doubled_ok;
    report(
        "end-to-end tracking",
        pass,
        &format!(
            "final Hausdorff {:.3e} (tol 5e-2), min wall distance {min_wall:.3e} (> 0), \
             relative area drift {:.3e} (tol 1e-3), run {:.0}s (cap 300s); halved \
             resolution {halved_note} ({}); doubled resolution Hausdorff {dh:.3e} \
             ({}, {doubled_elapsed:.0}s)",
            traj.final_hausdorff,
            traj.area_drift_rel,
            s.elapsed_s,
            if halved_ok { "as required" } else { "UNEXPECTED" },
            if doubled_ok { "at the floor" } else { "OUT OF BAND" },
        ),
    );
}

// ---------------------------------------------------------------------------
// 6. The a-posteriori deviation certificate holds on the real run, and its
//    measured deviation responds correctly to a known injected drift.
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_deviation_certificate() {
    let s = standard();
    let flow = ModelFlow::from_descriptor(&s.output.flow).unwrap();
    let certificate = verify_gronwall(
        &s.output.trajectory,
        &flow,
        &s.output.blended,
        s.config.delta,
        Some(&s.config.domain),
    )
    .unwrap();

    // Inject a constant drift of 0.1: the curves separate by exactly 0.1*t,
    // so the measured deviation must come out at 0.1 and stay certified.
    let drifted = |t: f64, x: &Point2<f64>| flow.eval(t, x) + Vector2::new(0.1, 0.0);
    let injected = verify_gronwall(
        &s.output.trajectory,
        &flow,
        &drifted,
        s.config.delta,
        Some(&s.config.domain),
    )
    .unwrap();

    let pass = certificate.pass && injected.pass && (injected.lhs - 0.1).abs() <= 0.01;
    report(
        "deviation certificate",
        pass,
        &format!(
            "real run: deviation {:.3e} <= bound {:.3e} ({}); injected 0.1 drift measured \
             as {:.4} (expect 0.100 +- 0.01, bound {:.4})",
            certificate.lhs,
            certificate.rhs,
            if certificate.pass { "certified" } else { "violated" },
            injected.lhs,
            injected.rhs,
        ),
    );
}

// ---------------------------------------------------------------------------
// 7. The partition of unity sums to one and the blended field is itself an
//    admissible Stokes field at all times.
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_partition_blend_admissible() {
    let s = standard();
    let pou = s.output.blended.partition();
    let m = 1000;
    let mut worst_sum = 0.0_f64;
    for i in 0..m {
        let t = i as f64 / (m - 1) as f64;
        let total: f64 = pou.weights(t).iter().sum();
        worst_sum = worst_sum.max((total - 1.0).abs());
    }

    let basis = s.output.basis();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    // Keep the probes at least 0.3 away from the source ring (the run's
    // sources sit 0.15 outside the boundary): the centered second-difference
    // momentum check truncates like h^2 / d^4, so points closer than that
    // probe the step size rather than the field.
    let points: Vec<Point2<f64>> = interior_points(&s.config.domain, 300, &mut rng)
        .into_iter()
        .filter(|p| basis.min_source_distance(p) >= 0.3)
        .take(100)
        .collect();
    assert!(points.len() == 100, "probe pool too small: {}", points.len());
    let mut worst_m = 0.0_f64;
    let mut worst_d = 0.0_f64;
    for _ in 0..10 {
        let t = rng.random_range(0.05..0.95);
        let c = s.output.blended.blended_coefficients(t);
        let norm = c.norm();
        if norm == 0.0 {
            continue;
        }
        // Normalize to a unit-energy field: the Stokes property is
        // scale-invariant and this keeps the finite-difference check in its
        // accuracy band regardless of the control's magnitude.
        let unit =
            FieldCoefficients::new(c.as_slice().iter().map(|v| v / norm).collect()).unwrap();
        let (wm, wd) = worst_stokes_residual(basis, &[unit], &points, 1e-4);
        worst_m = worst_m.max(wm);
        worst_d = worst_d.max(wd);
    }

    let pass = worst_sum <= 1e-12 && worst_m <= 1e-6 && worst_d <= 1e-6;
    report(
        "partition blend admissible",
        pass,
        &format!(
            "max |sum(weights) - 1| {worst_sum:.3e} over 1000 times (tol 1e-12); blended \
             field max |momentum| {worst_m:.3e}, max |divergence| {worst_d:.3e} \
             (tol 1e-6) at 10 times x 100 points"
        ),
    );
}

// ---------------------------------------------------------------------------
// 8. Bitwise determinism: rerunning the same configuration reproduces the
//    serialized trajectory and control artifacts byte for byte.
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_deterministic_artifacts() {
    let s = standard();
    let fresh = run(&s.config).expect("repeat run");
    let t_a = serde_json::to_string_pretty(&TrajectoryFile::from_run(&s.config, &s.output)).unwrap();
    let t_b = serde_json::to_string_pretty(&TrajectoryFile::from_run(&s.config, &fresh)).unwrap();
    let c_a = serde_json::to_string_pretty(&ControlFile::from_run(&s.output)).unwrap();
    let c_b = serde_json::to_string_pretty(&ControlFile::from_run(&fresh)).unwrap();

    let pass = t_a == t_b && c_a == c_b;
    report(
        "deterministic artifacts",
        pass,
        &format!(
            "trajectory JSON {} bytes ({}), control JSON {} bytes ({})",
            t_a.len(),
            if t_a == t_b { "identical" } else { "DIFFERS" },
            c_a.len(),
            if c_a == c_b { "identical" } else { "DIFFERS" },
        ),
    );
}

// ---------------------------------------------------------------------------
// 9. Starting from a nonzero initial field: the realized control equals the
//    initial field at t=0, ramps it out, and still reaches the target; a
//    zero initial field reduces exactly to the plain run.
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_ramp_from_initial_field() {
    let s = standard();
    let basis = s.output.basis();
    let n = basis.len();

    let zero_out = run_with_initial_condition(&s.config, &FieldCoefficients::zeros(n), 0.25)
        .expect("zero initial field run");
    let plain = serde_json::to_string_pretty(&TrajectoryFile::from_run(&s.config, &s.output)).unwrap();
    let zeroed = serde_json::to_string_pretty(&TrajectoryFile::from_run(&s.config, &zero_out)).unwrap();
    let zero_reduces = plain == zeroed;

    let mut v = vec![0.0; n];
    for j in (0..n).step_by(9) {
        v[j] = 0.02;
    }
    let u0 = FieldCoefficients::new(v).unwrap();
    let out = run_with_initial_condition(&s.config, &u0, 0.25).expect("ramped run");
    let ramp = out.ramp.as_ref().expect("nonzero initial field must ramp");
    let realized = RealizedControlField {
        blended: &out.blended,
        ramp: out.ramp.as_ref(),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut probes: Vec<Point2<f64>> = s
        .config
        .domain
        .sample_sigma(64)
        .into_iter()
        .map(|b| b.point)
        .collect();
    probes.extend(interior_points(&s.config.domain, 50, &mut rng));
    let start_basis = out.basis();
    let worst_t0 = probes
        .iter()
        .map(|p| {
            (realized.velocity(0.0, p).unwrap() - start_basis.eval_velocity(&u0, p).unwrap()).norm()
        })
        .fold(0.0, f64::max);

    let pass = zero_reduces
        && worst_t0 <= 1e-10
        && out.trajectory.final_hausdorff <= 0.05;
    report(
        "ramp from initial field",
        pass,
        &format!(
            "zero field reduces to plain run: {}; realized field at t=0 matches the \
             initial field to {worst_t0:.3e} (tol 1e-10) on {} probes; ramp horizon \
             {:.3} after {} bisections; ramped final Hausdorff {:.3e} (tol 5e-2)",
            zero_reduces,
            probes.len(),
            ramp.tau,
            ramp.bisections,
            out.trajectory.final_hausdorff,
        ),
    );
}
