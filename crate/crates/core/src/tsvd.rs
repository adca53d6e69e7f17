//! Regularized least squares via truncated singular value decomposition.
//!
//! All fitting and synthesis steps reduce to dense least-squares problems
//! `min ‖Ax − b‖₂` whose columns become numerically dependent as the basis
//! grows. The solver discards singular directions below a relative cutoff
//! instead of letting them amplify roundoff, and reports the retained
//! spectrum so callers can expose conditioning diagnostics.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default relative singular-value cutoff.
pub const DEFAULT_SVD_CUTOFF: f64 = 1e-10;

/// Ratio of rows to columns beyond which the system is first compressed by
/// a QR factorization (the SVD then runs on the small triangular factor).
const QR_ASPECT_THRESHOLD: f64 = 1.5;

/// Solution of a truncated-SVD least-squares solve, with the spectrum
/// endpoints needed for conditioning reports.
#[derive(Debug, Clone)]
pub struct LsqSolution {
    pub x: DVector<f64>,
    /// Largest singular value of the system matrix.
    pub smax: f64,
    /// Smallest singular value that survived truncation.
    pub smin_retained: f64,
    /// Number of retained singular directions.
    pub rank: usize,
}

/// Solves `min ‖Ax − b‖₂`, discarding singular values below `tau · σ_max`.
///
/// Strongly overdetermined systems are reduced to `R x ≈ Qᵀb` first, which
/// leaves the singular values (and therefore the truncation decision)
/// unchanged while shrinking the SVD to the column dimension.
pub fn solve_truncated(a: &DMatrix<f64>, b: &DVector<f64>, tau: f64) -> Result<LsqSolution> {
    if a.nrows() != b.len() {
        return Err(Error::SampleCountMismatch {
            a: a.nrows(),
            b: b.len(),
        });
    }
    if a.ncols() == 0 || a.nrows() == 0 {
        return Err(Error::DegenerateProblem(
            "least-squares system has no rows or no columns".into(),
        ));
    }
    if !(tau.is_finite() && tau > 0.0 && tau < 1.0) {
        return Err(Error::OutOfRange(format!(
            "singular-value cutoff must lie in (0, 1), got {tau}"
        )));
    }
    if a.iter().any(|v| !v.is_finite()) || b.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateProblem(
            "least-squares system contains non-finite entries".into(),
        ));
    }

    let n = a.ncols();
    if a.nrows() as f64 > QR_ASPECT_THRESHOLD * n as f64 {
        let qr = a.clone().qr();
        let mut rhs = b.clone();
        qr.q_tr_mul(&mut rhs);
        let r = qr.r();
        let reduced = rhs.rows(0, n).into_owned();
        svd_solve(&r, &reduced, tau)
    } else {
        svd_solve(a, b, tau)
    }
}

fn svd_solve(m: &DMatrix<f64>, rhs: &DVector<f64>, tau: f64) -> Result<LsqSolution> {
    let n = m.ncols();
    let svd = m.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    if !(smax.is_finite() && smax > 0.0) {
        return Err(Error::DegenerateProblem(
            "system matrix is numerically zero".into(),
        ));
    }
    let cutoff = tau * smax;
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");

    let mut x = DVector::zeros(n);
    let mut rank = 0usize;
    let mut smin_retained = smax;
    for i in 0..sv.len() {
        let s = sv[i];
        if s > cutoff {
            rank += 1;
            smin_retained = smin_retained.min(s);
            let coef = u.column(i).dot(rhs) / s;
            x.axpy(coef, &v_t.row(i).transpose(), 1.0);
        }
    }
    if rank == 0 {
        return Err(Error::DegenerateProblem(
            "all singular values fall below the truncation cutoff".into(),
        ));
    }
    Ok(LsqSolution {
        x,
        smax,
        smin_retained,
        rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn recovers_exact_solution_of_consistent_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5104_31);
        let a = random_matrix(&mut rng, 60, 10);
        let x_true = DVector::from_fn(10, |i, _| (i as f64 * 0.7).sin());
        let b = &a * &x_true;
        let sol = solve_truncated(&a, &b, DEFAULT_SVD_CUTOFF).unwrap();
        assert_eq!(sol.rank, 10);
        assert!((&sol.x - &x_true).norm() < 1e-10);
    }

    #[test]
    fn square_system_matches_lu_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5104_32);
        let a = random_matrix(&mut rng, 20, 20);
        let b = DVector::from_fn(20, |i, _| (i as f64).cos());
        let direct = a.clone().lu().solve(&b).unwrap();
        let sol = solve_truncated(&a, &b, DEFAULT_SVD_CUTOFF).unwrap();
        assert!((&sol.x - &direct).norm() < 1e-9 * direct.norm().max(1.0));
    }

    #[test]
    fn qr_reduction_agrees_with_normal_equations() {
        // Independent oracle: for a well-conditioned tall system the
        // least-squares solution solves AᵀA x = Aᵀb exactly.
        let mut rng = ChaCha8Rng::seed_from_u64(0x5104_33);
        let a = random_matrix(&mut rng, 200, 12);
        let b = DVector::from_fn(200, |i, _| (0.1 * i as f64).sin());
        let sol = solve_truncated(&a, &b, DEFAULT_SVD_CUTOFF).unwrap();
        let gram = a.transpose() * &a;
        let oracle = gram
            .cholesky()
            .expect("well conditioned")
            .solve(&(a.transpose() * &b));
        assert!((&sol.x - &oracle).norm() < 1e-8 * oracle.norm().max(1.0));
    }

    #[test]
    fn truncation_suppresses_tiny_directions() {
        // diag(1, 1e-14): the second direction sits far below the cutoff, so
        // the solve must not blow b₂ up by 1e14.
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-14]));
        let b = DVector::from_vec(vec![1.0, 1.0]);
        let sol = solve_truncated(&a, &b, 1e-10).unwrap();
        assert_eq!(sol.rank, 1);
        assert!((sol.x[0] - 1.0).abs() < 1e-12);
        assert!(sol.x[1].abs() < 1e-12);
        assert!((sol.smax - 1.0).abs() < 1e-12);
        assert!((sol.smin_retained - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_duplicate_column_splits_weight() {
        // Two identical columns: the minimum-norm solution puts half the
        // coefficient on each.
        let mut rng = ChaCha8Rng::seed_from_u64(0x5104_34);
        let col = DVector::<f64>::from_fn(30, |_, _| rng.random_range(-1.0..1.0));
        let a = DMatrix::from_columns(&[col.clone(), col.clone()]);
        let b = &col * 3.0;
        let sol = solve_truncated(&a, &b, 1e-10).unwrap();
        assert_eq!(sol.rank, 1);
        assert!((sol.x[0] - 1.5).abs() < 1e-10);
        assert!((sol.x[1] - 1.5).abs() < 1e-10);
    }

    #[test]
    fn smax_matches_power_iteration_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5104_35);
        let a = random_matrix(&mut rng, 80, 15);
        let gram = a.transpose() * &a;
        let mut v = DVector::from_element(15, 1.0).normalize();
        for _ in 0..500 {
            v = (&gram * &v).normalize();
        }
        let sigma_max = (&gram * &v).dot(&v).sqrt();
        let sol = solve_truncated(&a, &DVector::zeros(80).add_scalar(1.0), 1e-10).unwrap();
        assert!((sol.smax - sigma_max).abs() < 1e-8 * sigma_max);
    }

    #[test]
    fn residual_is_orthogonal_to_column_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5104_36);
        for _ in 0..20 {
            let rows = rng.random_range(20..60);
            let cols = rng.random_range(2..12);
            let a = random_matrix(&mut rng, rows, cols);
            let b = DVector::from_fn(rows, |i, _| rng.random_range(-1.0..1.0) + i as f64 * 0.01);
            let sol = solve_truncated(&a, &b, DEFAULT_SVD_CUTOFF).unwrap();
            if sol.rank == cols {
                let resid = &b - &a * &sol.x;
                let gradient = a.transpose() * resid;
                assert!(gradient.norm() < 1e-8 * b.norm().max(1.0));
            }
        }
    }

    #[test]
    fn rejects_malformed_inputs() {
        let a = DMatrix::<f64>::zeros(4, 2);
        let b = DVector::<f64>::zeros(4);
        assert!(matches!(
            solve_truncated(&a, &b, 1e-10),
            Err(Error::DegenerateProblem(_))
        ));
        let a = DMatrix::<f64>::identity(4, 4);
        let short = DVector::<f64>::zeros(3);
        assert!(matches!(
            solve_truncated(&a, &short, 1e-10),
            Err(Error::SampleCountMismatch { .. })
        ));
        let b = DVector::<f64>::zeros(4);
        assert!(solve_truncated(&a, &b, 0.0).is_err());
        assert!(solve_truncated(&a, &b, 1.0).is_err());
    }
}
