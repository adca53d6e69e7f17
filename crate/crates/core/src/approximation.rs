//! Least-squares approximation of target fields by basis combinations.
//!
//! Given velocities (and optionally gradients) prescribed on a finite point
//! set inside the domain, find coefficients whose combined field matches
//! them. The discrete objective is a weighted L² sum, solved by truncated
//! SVD; reports always carry max-norm residuals recomputed from the
//! returned coefficients, never the solver's internal residual.

use nalgebra::{DMatrix, DVector, Matrix2, Point2, Vector2};
use rayon::prelude::*;

use crate::basis::{FieldCoefficients, StokesBasis};
use crate::error::{Error, Result};
use crate::geometry::{CollocationSet, Domain};
use crate::tsvd;

/// One approximation target: a point, the velocity to match there, an
/// optional velocity gradient (matched when the problem order is 1), and a
/// positive quadrature weight.
#[derive(Debug, Clone)]
pub struct TargetPoint {
    pub point: Point2<f64>,
    pub velocity: Vector2<f64>,
    pub gradient: Option<Matrix2<f64>>,
    pub weight: f64,
}

/// A discrete C^k matching problem (k ∈ {0, 1}).
#[derive(Debug, Clone)]
pub struct ApproximationProblem {
    targets: Vec<TargetPoint>,
    k: u8,
    tau_svd: f64,
}

impl ApproximationProblem {
    pub fn new(targets: Vec<TargetPoint>, k: u8, tau_svd: f64) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::DegenerateProblem("no target points".into()));
        }
        if k > 1 {
            return Err(Error::OutOfRange(format!(
                "matching order must be 0 or 1, got {k}"
            )));
        }
        if !(tau_svd.is_finite() && tau_svd > 0.0 && tau_svd < 1.0) {
            return Err(Error::OutOfRange(format!(
                "singular-value cutoff must lie in (0, 1), got {tau_svd}"
            )));
        }
        for t in &targets {
            if !(t.weight.is_finite() && t.weight > 0.0) {
                return Err(Error::DegenerateProblem(
                    "target weights must be positive and finite".into(),
                ));
            }
            let finite = t.point.coords.iter().all(|c| c.is_finite())
                && t.velocity.iter().all(|c| c.is_finite())
                && t.gradient.is_none_or(|g| g.iter().all(|c| c.is_finite()));
            if !finite {
                return Err(Error::DegenerateProblem(
                    "target data must be finite".into(),
                ));
            }
        }
        Ok(Self {
            targets,
            k,
            tau_svd,
        })
    }

    /// Builds velocity-only targets from a collocation set, taking weights
    /// from the set's quadrature weights.
    pub fn from_collocation(
        set: &CollocationSet,
        velocities: &[Vector2<f64>],
        k: u8,
        tau_svd: f64,
    ) -> Result<Self> {
        if velocities.len() != set.len() {
            return Err(Error::SampleCountMismatch {
                a: set.len(),
                b: velocities.len(),
            });
        }
        let targets = set
            .points()
            .iter()
            .zip(velocities)
            .zip(set.weights())
            .map(|((p, v), w)| TargetPoint {
                point: *p,
                velocity: *v,
                gradient: None,
                weight: *w,
            })
            .collect();
        Self::new(targets, k, tau_svd)
    }

    pub fn targets(&self) -> &[TargetPoint] {
        &self.targets
    }

    pub fn order(&self) -> u8 {
        self.k
    }

    pub fn tau_svd(&self) -> f64 {
        self.tau_svd
    }
}

/// Result of one fit: the coefficients, recomputed max-norm residuals, the
/// retained spectrum endpoints, and the basis size used.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub coefficients: FieldCoefficients,
    /// max over targets of |u_fit − u_target|.
    pub residual_c0: f64,
    /// max over gradient-carrying targets of ‖∇u_fit − G_target‖_F, when
    /// the problem order is 1 and such targets exist.
    pub residual_c1: Option<f64>,
    /// Largest singular value of the weighted system.
    pub smax: f64,
    /// Smallest retained singular value.
    pub smin: f64,
    pub basis_size: usize,
}

/// Solves the weighted least-squares matching problem over the basis.
///
/// Never fails just because the basis cannot represent the target; the
/// caller judges the reported residuals.
pub fn fit(problem: &ApproximationProblem, basis: &StokesBasis) -> Result<FitReport> {
    if basis.is_empty() {
        return Err(Error::DegenerateProblem("empty basis".into()));
    }
    let n = basis.len();
    let with_gradients = problem.k == 1;

    // Per-point kernel columns, data-parallel over targets.
    let columns: Vec<(Vec<Vector2<f64>>, Option<Vec<Matrix2<f64>>>)> = problem
        .targets
        .par_iter()
        .map(|t| {
            let v = basis.velocity_columns(&t.point)?;
            let g = if with_gradients && t.gradient.is_some() {
                Some(basis.gradient_columns(&t.point)?)
            } else {
                None
            };
            Ok((v, g))
        })
        .collect::<Result<_>>()?;

    let n_grad_targets = columns.iter().filter(|(_, g)| g.is_some()).count();
    let rows = 2 * problem.targets.len() + 4 * n_grad_targets;
    let mut a = DMatrix::zeros(rows, n);
    let mut b = DVector::zeros(rows);
    let mut row = 0;
    for (t, (vel_cols, grad_cols)) in problem.targets.iter().zip(&columns) {
        let s = t.weight.sqrt();
        for comp in 0..2 {
            for (j, u) in vel_cols.iter().enumerate() {
                a[(row, j)] = s * u[comp];
            }
            b[row] = s * t.velocity[comp];
            row += 1;
        }
        if let (Some(g_target), Some(g_cols)) = (t.gradient, grad_cols) {
            for i in 0..2 {
                for k in 0..2 {
                    for (j, g) in g_cols.iter().enumerate() {
                        a[(row, j)] = s * g[(i, k)];
                    }
                    b[row] = s * g_target[(i, k)];
                    row += 1;
                }
            }
        }
    }

    let sol = tsvd::solve_truncated(&a, &b, problem.tau_svd)?;
    let coefficients = FieldCoefficients::from_dvector(&sol.x)?;

    // Residuals recomputed from the coefficients, not the solver.
    let mut residual_c0 = 0.0f64;
    let mut residual_c1 = 0.0f64;
    for t in &problem.targets {
        let u = basis.eval_velocity(&coefficients, &t.point)?;
        residual_c0 = residual_c0.max((u - t.velocity).norm());
        if with_gradients {
            if let Some(g_target) = t.gradient {
                let g = basis.eval_gradient(&coefficients, &t.point)?;
                residual_c1 = residual_c1.max((g - g_target).norm());
            }
        }
    }
    Ok(FitReport {
        coefficients,
        residual_c0,
        residual_c1: (with_gradients && n_grad_targets > 0).then_some(residual_c1),
        smax: sol.smax,
        smin: sol.smin_retained,
        basis_size: n,
    })
}

/// Discrete C^k norm of sampled field data: max |u|, plus max ‖∇u‖_F when
/// k = 1.
pub fn discrete_ck_norm(
    velocities: &[Vector2<f64>],
    gradients: Option<&[Matrix2<f64>]>,
    k: u8,
) -> Result<f64> {
    if k > 1 {
        return Err(Error::OutOfRange(format!(
            "norm order must be 0 or 1, got {k}"
        )));
    }
    let c0 = velocities.iter().map(|u| u.norm()).fold(0.0, f64::max);
    if k == 0 {
        return Ok(c0);
    }
    let gradients = gradients.ok_or_else(|| {
        Error::DegenerateProblem("order-1 norm requires gradient samples".into())
    })?;
    if gradients.len() != velocities.len() {
        return Err(Error::SampleCountMismatch {
            a: velocities.len(),
            b: gradients.len(),
        });
    }
    let c1 = gradients.iter().map(|g| g.norm()).fold(0.0, f64::max);
    Ok(c0 + c1)
}

/// One row of a convergence sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub basis_size: usize,
    pub residual_c0: f64,
    pub residual_c1: Option<f64>,
    pub smax: f64,
    pub smin: f64,
}

/// Fits the same problem with bases of increasing size and tabulates the
/// residuals. `sizes` are exterior source counts (strictly ascending); each
/// hole receives half that count, at least 4. The geometry (targets,
/// weights, offset) is shared across rows.
pub fn convergence_sweep(
    problem: &ApproximationProblem,
    domain: &Domain,
    sizes: &[usize],
    offset: f64,
) -> Result<Vec<SweepRow>> {
    if sizes.is_empty() {
        return Err(Error::OutOfRange("sweep needs at least one size".into()));
    }
    if sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::OutOfRange(
            "sweep sizes must be strictly ascending".into(),
        ));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let counts = region_counts(domain, size);
        let basis = crate::basis::place_sources(domain, &counts, offset)?;
        let report = fit(problem, &basis)?;
        rows.push(SweepRow {
            basis_size: basis.len(),
            residual_c0: report.residual_c0,
            residual_c1: report.residual_c1,
            smax: report.smax,
            smin: report.smin,
        });
    }
    Ok(rows)
}

/// Per-region source counts for a sweep size: `size` exterior locations and
/// half as many (at least 4) per hole.
pub fn region_counts(domain: &Domain, size: usize) -> Vec<usize> {
    let mut counts = vec![size];
    counts.extend(std::iter::repeat_n((size / 2).max(4), domain.holes().len()));
    counts
}

/// Renders sweep rows as CSV with header
/// `basis_size,residual_c0,residual_c1,smax,smin`; the `residual_c1` field
/// is empty for order-0 sweeps.
pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("basis_size,residual_c0,residual_c1,smax,smin\n");
    for r in rows {
        let c1 = r
            .residual_c1
            .map(|v| format!("{v:.12e}"))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{:.12e},{},{:.12e},{:.12e}\n",
            r.basis_size, r.residual_c0, c1, r.smax, r.smin
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::place_sources;
    use crate::geometry::JordanCurve;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn disk_domain() -> Domain {
        let outer = JordanCurve::circle(Point2::origin(), 1.0, 256).unwrap();
        Domain::no_control(outer, vec![]).unwrap()
    }

    fn random_interior_points(rng: &mut ChaCha8Rng, n: usize, rmax: f64) -> Vec<Point2<f64>> {
        let mut pts = Vec::with_capacity(n);
        while pts.len() < n {
            let p = Point2::new(rng.random_range(-rmax..rmax), rng.random_range(-rmax..rmax));
            if p.coords.norm() < rmax {
                pts.push(p);
            }
        }
        pts
    }

    fn targets_from_field(
        basis: &StokesBasis,
        c: &FieldCoefficients,
        points: &[Point2<f64>],
        with_gradient: bool,
    ) -> Vec<TargetPoint> {
        points
            .iter()
            .map(|p| TargetPoint {
                point: *p,
                velocity: basis.eval_velocity(c, p).unwrap(),
                gradient: with_gradient.then(|| basis.eval_gradient(c, p).unwrap()),
                weight: 1.0,
            })
            .collect()
    }

    #[test]
    fn span_member_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5104_51);
        let domain = disk_domain();
        let basis = place_sources(&domain, &[32], 0.3).unwrap();
        let mut c_true = vec![0.0; basis.len()];
        c_true[5] = 1.0;
        let c_true = FieldCoefficients::new(c_true).unwrap();
        let pts = random_interior_points(&mut rng, 40, 0.8);
        let problem = ApproximationProblem::new(
            targets_from_field(&basis, &c_true, &pts, false),
            0,
            1e-12,
        )
        .unwrap();
        let report = fit(&problem, &basis).unwrap();
        assert!(report.residual_c0 <= 1e-10, "c0 {}", report.residual_c0);
        // The fitted field agrees with the target field away from the
        // sampling points too (the coefficient vector itself is unique only
        // up to the sampling null space).
        for p in random_interior_points(&mut rng, 20, 0.7) {
            let u_fit = basis.eval_velocity(&report.coefficients, &p).unwrap();
            let u_true = basis.eval_velocity(&c_true, &p).unwrap();
            assert!((u_fit - u_true).norm() < 1e-8);
        }
    }

    #[test]
    fn constant_field_residual_drops_with_basis_size() {
        let domain = disk_domain();
        let circle = JordanCurve::circle(Point2::origin(), 0.5, 64).unwrap();
        let velocities = vec![Vector2::new(1.0, 0.0); circle.len()];
        let targets: Vec<TargetPoint> = circle
            .points()
            .iter()
            .zip(circle.node_weights())
            .zip(&velocities)
            .map(|((p, w), v)| TargetPoint {
                point: *p,
                velocity: *v,
                gradient: None,
                weight: w,
            })
            .collect();
        let problem = ApproximationProblem::new(targets, 0, 1e-10).unwrap();
        let coarse = fit(&problem, &place_sources(&domain, &[16], 0.3).unwrap()).unwrap();
        let fine = fit(&problem, &place_sources(&domain, &[64], 0.3).unwrap()).unwrap();
        assert!(
            fine.residual_c0 <= 0.1 * coarse.residual_c0,
            "coarse {} fine {}",
            coarse.residual_c0,
            fine.residual_c0
        );
    }

    #[test]
    fn empty_targets_are_rejected() {
        assert!(matches!(
            ApproximationProblem::new(vec![], 0, 1e-10),
            Err(Error::DegenerateProblem(_))
        ));
    }

    #[test]
    fn ck_norm_examples() {
        assert_eq!(
            discrete_ck_norm(&[Vector2::zeros(); 8], None, 0).unwrap(),
            0.0
        );
        assert_eq!(
            discrete_ck_norm(&[Vector2::new(3.0, 4.0); 5], None, 0).unwrap(),
            5.0
        );
        // Point source at the origin evaluated on the unit circle.
        let basis = StokesBasis::from_elements(
            vec![crate::basis::BasisElement {
                location: Point2::origin(),
                kind: crate::basis::SourceKind::PointSource,
                region: crate::basis::Region::Exterior,
            }],
            1.0,
        )
        .unwrap();
        let c = FieldCoefficients::new(vec![1.0]).unwrap();
        let circle = JordanCurve::circle(Point2::origin(), 1.0, 128).unwrap();
        let evals: Vec<Vector2<f64>> = circle
            .points()
            .iter()
            .map(|p| basis.eval_velocity(&c, p).unwrap())
            .collect();
        let norm = discrete_ck_norm(&evals, None, 0).unwrap();
        assert!((norm - 1.0 / (2.0 * PI)).abs() < 1e-4);
    }

    #[test]
    fn order_one_norm_needs_gradients() {
        assert!(discrete_ck_norm(&[Vector2::zeros()], None, 1).is_err());
        let g = Matrix2::new(1.0, 0.0, 0.0, -1.0);
        let norm = discrete_ck_norm(&[Vector2::new(3.0, 4.0)], Some(&[g]), 1).unwrap();
        assert!((norm - (5.0 + 2.0f64.sqrt())).abs() < 1e-14);
    }

    #[test]
    fn reported_residual_matches_independent_recompute() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5104_52);
        let domain = disk_domain();
        let basis = place_sources(&domain, &[16], 0.3).unwrap();
        // A target the basis cannot represent exactly: rigid rotation.
        let pts = random_interior_points(&mut rng, 30, 0.7);
        let targets: Vec<TargetPoint> = pts
            .iter()
            .map(|p| TargetPoint {
                point: *p,
                velocity: Vector2::new(-p.y, p.x),
                gradient: None,
                weight: 0.5 + p.coords.norm(),
            })
            .collect();
        let problem = ApproximationProblem::new(targets.clone(), 0, 1e-10).unwrap();
        let report = fit(&problem, &basis).unwrap();
        let recomputed = targets
            .iter()
            .map(|t| {
                (basis.eval_velocity(&report.coefficients, &t.point).unwrap() - t.velocity)
                    .norm()
            })
            .fold(0.0, f64::max);
        assert!((report.residual_c0 - recomputed).abs() <= 1e-12);
    }

    #[test]
    fn gradient_matching_recovers_span_member() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5104_53);
        let domain = disk_domain();
        let basis = place_sources(&domain, &[24], 0.3).unwrap();
        let coeffs: Vec<f64> = (0..basis.len())
            .map(|_| rng.random_range(-0.5..0.5))
            .collect();
        let c_true = FieldCoefficients::new(coeffs).unwrap();
        let pts = random_interior_points(&mut rng, 60, 0.8);
        let problem = ApproximationProblem::new(
            targets_from_field(&basis, &c_true, &pts, true),
            1,
            1e-12,
        )
        .unwrap();
        let report = fit(&problem, &basis).unwrap();
        assert!(report.residual_c0 <= 1e-8);
        assert!(report.residual_c1.unwrap() <= 1e-8);
    }

    #[test]
    fn scaling_targets_scales_coefficients_and_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5104_54);
        let domain = disk_domain();
        let basis = place_sources(&domain, &[16], 0.3).unwrap();
        let pts = random_interior_points(&mut rng, 30, 0.7);
        let base_targets: Vec<TargetPoint> = pts
            .iter()
            .map(|p| TargetPoint {
                point: *p,
                velocity: Vector2::new(-p.y, p.x),
                gradient: None,
                weight: 1.0,
            })
            .collect();
        // A power-of-two scale commutes exactly with every floating-point
        // operation in the solve, so linearity holds to the last bit even
        // though the truncated least-squares problem is ill-conditioned.
        // (A generic scale would be amplified by eps/tau_svd in the
        // coefficients, which says nothing about the solver.)
        let s = 2.0;
        let scaled_targets: Vec<TargetPoint> = base_targets
            .iter()
            .map(|t| TargetPoint {
                velocity: t.velocity * s,
                ..*t
            })
            .collect();
        let r1 = fit(
            &ApproximationProblem::new(base_targets, 0, 1e-10).unwrap(),
            &basis,
        )
        .unwrap();
        let r2 = fit(
            &ApproximationProblem::new(scaled_targets, 0, 1e-10).unwrap(),
            &basis,
        )
        .unwrap();
        assert!((r2.residual_c0 - s * r1.residual_c0).abs() <= 1e-12 * r2.residual_c0.max(1.0));
        for (a, b) in r1
            .coefficients
            .as_slice()
            .iter()
            .zip(r2.coefficients.as_slice())
        {
            assert!((b - s * a).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn refitting_a_fitted_field_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5104_55);
        let domain = disk_domain();
        let basis = place_sources(&domain, &[16], 0.3).unwrap();
        let pts = random_interior_points(&mut rng, 40, 0.7);
        let targets: Vec<TargetPoint> = pts
            .iter()
            .map(|p| TargetPoint {
                point: *p,
                velocity: Vector2::new(-p.y, p.x),
                gradient: None,
                weight: 1.0,
            })
            .collect();
        let first = fit(
            &ApproximationProblem::new(targets, 0, 1e-10).unwrap(),
            &basis,
        )
        .unwrap();
        let refit_targets = targets_from_field(&basis, &first.coefficients, &pts, false);
        let second = fit(
            &ApproximationProblem::new(refit_targets, 0, 1e-10).unwrap(),
            &basis,
        )
        .unwrap();
        let c1 = first.coefficients.to_dvector();
        let c2 = second.coefficients.to_dvector();
        assert!((&c1 - &c2).norm() <= 1e-8 * c1.norm().max(1.0));
    }

    #[test]
    fn sweep_is_monotone_in_trend_and_emits_csv() {
        let domain = disk_domain();
        let circle = JordanCurve::circle(Point2::origin(), 0.5, 64).unwrap();
        let targets: Vec<TargetPoint> = circle
            .points()
            .iter()
            .zip(circle.node_weights())
            .map(|(p, w)| TargetPoint {
                point: *p,
                velocity: Vector2::new(1.0, 0.0),
                gradient: None,
                weight: w,
            })
            .collect();
        let problem = ApproximationProblem::new(targets, 0, 1e-10).unwrap();
        let rows = convergence_sweep(&problem, &domain, &[8, 16, 32, 64], 0.3).unwrap();
        assert_eq!(rows.len(), 4);
        let first = rows.first().unwrap();
        let last = rows.last().unwrap();
        assert!(last.residual_c0 <= first.residual_c0 * 1.05);
        let csv = sweep_to_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "basis_size,residual_c0,residual_c1,smax,smin"
        );
        assert_eq!(lines.count(), 4);
        assert!(csv.contains(",,")); // order-0 sweep leaves residual_c1 empty

        // Descending sizes are a configuration error.
        assert!(convergence_sweep(&problem, &domain, &[64, 16], 0.3).is_err());
        // Single size yields a single row.
        let one = convergence_sweep(&problem, &domain, &[8], 0.3).unwrap();
        assert_eq!(one.len(), 1);
    }
}
