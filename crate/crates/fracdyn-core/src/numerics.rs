//! Dense linear-algebra and convex-solver primitives shared by every other
//! module: numerical rank, minimum-norm least squares, ridge regression, and
//! an l1-penalized coordinate-descent solver.
//!
//! All tolerance policy lives here. The default rank tolerance is the usual
//! scale-aware choice `max(rows, cols) * eps * sigma_max`, overridable per
//! call.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Iteration cap handed to the SVD so a stalled factorization surfaces as an
/// explicit error instead of spinning.
const SVD_MAX_ITERATIONS: usize = 10_000;

/// Numerical rank of a matrix together with the evidence it was computed
/// from.
#[derive(Debug, Clone)]
pub struct RankReport {
    /// Count of singular values strictly above `tolerance_used`.
    pub rank: usize,
    /// All singular values, sorted in nonincreasing order.
    pub singular_values: Vec<f64>,
    /// The threshold actually applied.
    pub tolerance_used: f64,
}

impl RankReport {
    /// Smallest singular value counted towards the rank, 0.0 if the rank is
    /// zero. Useful as a conditioning diagnostic.
    pub fn min_retained_singular_value(&self) -> f64 {
        if self.rank == 0 {
            0.0
        } else {
            self.singular_values[self.rank - 1]
        }
    }
}

/// Settings for [`lasso`].
///
/// `penalty` is the coefficient of the l1 term in
/// `||r - Bu||_2^2 + penalty * ||u||_1`. Note the squared-norm term carries
/// no 1/2 factor, so for an orthonormal design the soft-threshold level is
/// `penalty / 2`.
#[derive(Debug, Clone)]
pub struct LassoConfig {
    /// Nonnegative l1 penalty. `+inf` is accepted and pins the solution at
    /// zero.
    pub penalty: f64,
    /// Maximum number of full coordinate sweeps.
    pub max_iterations: usize,
    /// Stop once the subgradient optimality residual falls to or below
    /// this, measured relative to the initial gradient scale
    /// `max(1, 2 ||B^T r||_inf)` so badly scaled data does not stall at the
    /// floating-point precision floor.
    pub convergence_tol: f64,
}

impl LassoConfig {
    pub fn new(penalty: f64) -> Self {
        LassoConfig {
            penalty,
            ..LassoConfig::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.penalty.is_nan() || self.penalty < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "lasso penalty must be nonnegative, got {}",
                self.penalty
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument(
                "lasso max_iterations must be at least 1".into(),
            ));
        }
        if self.convergence_tol.is_nan() || self.convergence_tol <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "lasso convergence_tol must be positive, got {}",
                self.convergence_tol
            )));
        }
        Ok(())
    }
}

impl Default for LassoConfig {
    fn default() -> Self {
        LassoConfig {
            penalty: 0.0,
            max_iterations: 20_000,
            convergence_tol: 1e-10,
        }
    }
}

/// Checks that every entry of a matrix is finite.
pub fn ensure_finite(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(name.to_string()))
    }
}

/// Checks that every entry of a vector is finite.
pub fn ensure_finite_vec(name: &str, v: &DVector<f64>) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(name.to_string()))
    }
}

/// Scale-aware default rank tolerance: `max(rows, cols) * eps * sigma_max`.
pub fn default_rank_tolerance(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * sigma_max
}

fn svd_of(m: &DMatrix<f64>, compute_uv: bool) -> Result<nalgebra::linalg::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    nalgebra::linalg::SVD::try_new(
        m.clone(),
        compute_uv,
        compute_uv,
        f64::EPSILON,
        SVD_MAX_ITERATIONS,
    )
    .ok_or_else(|| Error::Numerical("singular-value iteration did not converge".into()))
}

/// Sorted singular values of `m`.
pub fn singular_values(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let svd = svd_of(m, false)?;
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).expect("singular values are finite"));
    Ok(sv)
}

/// Numerical rank of `m` from its singular values.
///
/// With `tol_override = None` the threshold is
/// [`default_rank_tolerance`]. The report is reproducible for identical
/// input.
pub fn numerical_rank(m: &DMatrix<f64>, tol_override: Option<f64>) -> Result<RankReport> {
    if m.is_empty() {
        return Err(Error::InvalidArgument(
            "numerical_rank: matrix must be nonempty".into(),
        ));
    }
    let sv = singular_values(m)?;
    let sigma_max = sv.first().copied().unwrap_or(0.0);
    let tolerance_used =
        tol_override.unwrap_or_else(|| default_rank_tolerance(m.nrows(), m.ncols(), sigma_max));
    let rank = sv.iter().filter(|&&s| s > tolerance_used).count();
    Ok(RankReport {
        rank,
        singular_values: sv,
        tolerance_used,
    })
}

/// Minimum-norm minimizer of `||z - Xa||_2^2`.
///
/// When `X` is rank deficient this is the pseudoinverse solution; singular
/// values at or below the default rank tolerance are treated as zero.
pub fn least_squares(x: &DMatrix<f64>, z: &DVector<f64>) -> Result<DVector<f64>> {
    if x.nrows() != z.len() {
        return Err(Error::Dimension(format!(
            "least_squares: X has {} rows but z has length {}",
            x.nrows(),
            z.len()
        )));
    }
    if x.ncols() == 0 {
        return Ok(DVector::zeros(0));
    }
    if x.nrows() == 0 {
        return Ok(DVector::zeros(x.ncols()));
    }
    let svd = svd_of(x, true)?;
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let tol = default_rank_tolerance(x.nrows(), x.ncols(), sigma_max);
    svd.solve(z, tol)
        .map_err(|e| Error::Numerical(format!("least_squares solve: {e}")))
}

/// Unique ridge minimizer `(X^T X + eps I)^{-1} X^T z` for `eps > 0`.
pub fn ridge(x: &DMatrix<f64>, z: &DVector<f64>, eps: f64) -> Result<DVector<f64>> {
    if !eps.is_finite() || eps <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "ridge: eps must be a positive real, got {eps}"
        )));
    }
    if x.nrows() != z.len() {
        return Err(Error::Dimension(format!(
            "ridge: X has {} rows but z has length {}",
            x.nrows(),
            z.len()
        )));
    }
    if x.ncols() == 0 {
        return Ok(DVector::zeros(0));
    }
    let mut normal = x.transpose() * x;
    for i in 0..normal.nrows() {
        normal[(i, i)] += eps;
    }
    let rhs = x.transpose() * z;
    let chol = nalgebra::linalg::Cholesky::new(normal)
        .ok_or_else(|| Error::Numerical("ridge: normal equations not positive definite".into()))?;
    Ok(chol.solve(&rhs))
}

fn soft_threshold(x: f64, level: f64) -> f64 {
    if x > level {
        x - level
    } else if x < -level {
        x + level
    } else {
        0.0
    }
}

/// Largest violation of the zero-subgradient condition of
/// `||r - Bu||_2^2 + penalty ||u||_1` at `u`. Zero at an exact optimum.
fn optimality_residual(b: &DMatrix<f64>, resid: &DVector<f64>, u: &DVector<f64>, penalty: f64) -> f64 {
    let mut worst = 0.0_f64;
    for j in 0..b.ncols() {
        let g = -2.0 * b.column(j).dot(resid);
        let v = if u[j] > 0.0 {
            (g + penalty).abs()
        } else if u[j] < 0.0 {
            (g - penalty).abs()
        } else {
            (g.abs() - penalty).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

fn lasso_objective(resid: &DVector<f64>, u: &DVector<f64>, penalty: f64) -> f64 {
    let l1: f64 = u.iter().map(|v| v.abs()).sum();
    // inf * 0 would poison the objective at the pinned-zero solution
    let pen_term = if l1 == 0.0 { 0.0 } else { penalty * l1 };
    resid.norm_squared() + pen_term
}

/// Minimizes `||r - Bu||_2^2 + penalty ||u||_1` by cyclic coordinate
/// descent.
///
/// `penalty = 0` degrades to [`least_squares`]. Convergence is declared when
/// the subgradient optimality residual falls to `convergence_tol`; hitting
/// `max_iterations` first is an error carrying the last iterate.
pub fn lasso(b: &DMatrix<f64>, r: &DVector<f64>, cfg: &LassoConfig) -> Result<DVector<f64>> {
    lasso_with_trace(b, r, cfg).map(|(u, _)| u)
}

/// Same as [`lasso`] but also returns the objective value after each sweep.
pub fn lasso_with_trace(
    b: &DMatrix<f64>,
    r: &DVector<f64>,
    cfg: &LassoConfig,
) -> Result<(DVector<f64>, Vec<f64>)> {
    cfg.validate()?;
    if b.nrows() != r.len() {
        return Err(Error::Dimension(format!(
            "lasso: B has {} rows but r has length {}",
            b.nrows(),
            r.len()
        )));
    }
    if cfg.penalty == 0.0 {
        let u = least_squares(b, r)?;
        let resid = r - b * &u;
        return Ok((u, vec![lasso_objective(&resid, &DVector::zeros(b.ncols()), 0.0)]));
    }

    let p = b.ncols();
    let col_sq: Vec<f64> = (0..p).map(|j| b.column(j).norm_squared()).collect();
    let mut u = DVector::<f64>::zeros(p);
    let mut resid = r.clone();
    let level = cfg.penalty / 2.0;
    let mut trace = Vec::new();

    let gradient_scale = (0..p)
        .map(|j| 2.0 * b.column(j).dot(r).abs())
        .fold(1.0_f64, f64::max);
    let threshold = cfg.convergence_tol * gradient_scale;

    for sweep in 0..cfg.max_iterations {
        for j in 0..p {
            if col_sq[j] == 0.0 {
                continue; // a zero column never leaves zero
            }
            let old = u[j];
            let rho = b.column(j).dot(&resid) + col_sq[j] * old;
            let new = soft_threshold(rho, level) / col_sq[j];
            if new != old {
                resid.axpy(old - new, &b.column(j), 1.0);
                u[j] = new;
            }
        }
        trace.push(lasso_objective(&resid, &u, cfg.penalty));
        let residual = optimality_residual(b, &resid, &u, cfg.penalty);
        if residual <= threshold {
            return Ok((u, trace));
        }
        if sweep + 1 == cfg.max_iterations {
            return Err(Error::LassoNoConvergence {
                iterations: cfg.max_iterations,
                residual,
                last_iterate: Box::new(u),
            });
        }
    }
    unreachable!("loop always returns")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn mat(rows: usize, cols: usize, entries: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, entries)
    }

    #[test]
    fn rank_of_identity() {
        let report = numerical_rank(&DMatrix::identity(3, 3), None).unwrap();
        assert_eq!(report.rank, 3);
        assert_eq!(report.singular_values, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn rank_of_zero_matrix() {
        let report = numerical_rank(&DMatrix::zeros(3, 3), None).unwrap();
        assert_eq!(report.rank, 0);
    }

    #[test]
    fn rank_of_proportional_columns() {
        // second column is twice the first; Gaussian elimination leaves one pivot
        let m = mat(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let report = numerical_rank(&m, None).unwrap();
        assert_eq!(report.rank, 1);
    }

    #[test]
    fn rank_rejects_empty() {
        assert!(matches!(
            numerical_rank(&DMatrix::zeros(0, 3), None),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn rank_tolerance_override() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-3]));
        assert_eq!(numerical_rank(&m, None).unwrap().rank, 2);
        assert_eq!(numerical_rank(&m, Some(1e-2)).unwrap().rank, 1);
    }

    #[test]
    fn least_squares_identity_design() {
        let a = least_squares(&DMatrix::identity(2, 2), &DVector::from_vec(vec![3.0, 4.0])).unwrap();
        assert_abs_diff_eq!(a[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a[1], 4.0, epsilon = 1e-12);
    }

    #[test]
    fn least_squares_mean_of_residuals() {
        // X = [[1],[1]], z = (1,3): minimizer is the mean 2
        let a = least_squares(&mat(2, 1, &[1.0, 1.0]), &DVector::from_vec(vec![1.0, 3.0])).unwrap();
        assert_abs_diff_eq!(a[0], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn least_squares_minimum_norm_on_deficient_design() {
        // any (a1, a2) with a1 + a2 = 2 fits exactly; minimum norm is (1, 1)
        let a = least_squares(
            &mat(2, 2, &[1.0, 1.0, 1.0, 1.0]),
            &DVector::from_vec(vec![2.0, 2.0]),
        )
        .unwrap();
        assert_abs_diff_eq!(a[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(a[1], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn least_squares_dimension_mismatch() {
        assert!(matches!(
            least_squares(&DMatrix::identity(2, 2), &DVector::from_vec(vec![1.0; 3])),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn ridge_identity_example() {
        // (I + I)^{-1} (2, 2) = (1, 1)
        let a = ridge(&DMatrix::identity(2, 2), &DVector::from_vec(vec![2.0, 2.0]), 1.0).unwrap();
        assert_abs_diff_eq!(a[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ridge_zero_target_gives_zero() {
        let x = mat(3, 2, &[1.0, 2.0, -0.5, 0.25, 3.0, 1.0]);
        let a = ridge(&x, &DVector::zeros(3), 0.7).unwrap();
        assert!(a.norm() < 1e-14);
    }

    #[test]
    fn ridge_limit_matches_least_squares() {
        let x = mat(2, 1, &[1.0, 1.0]);
        let z = DVector::from_vec(vec![1.0, 3.0]);
        let a = ridge(&x, &z, 1e-12).unwrap();
        assert_abs_diff_eq!(a[0], 2.0, epsilon = 1e-9);
    }

    #[test]
    fn ridge_requires_positive_eps() {
        let x = DMatrix::identity(2, 2);
        let z = DVector::zeros(2);
        assert!(ridge(&x, &z, 0.0).is_err());
        assert!(ridge(&x, &z, -1.0).is_err());
    }

    #[test]
    fn lasso_orthonormal_soft_threshold() {
        // B = I, r = (3, 0.1), penalty 1: closed form max(|r|-1/2, 0) sign(r)
        let cfg = LassoConfig::new(1.0);
        let u = lasso(
            &DMatrix::identity(2, 2),
            &DVector::from_vec(vec![3.0, 0.1]),
            &cfg,
        )
        .unwrap();
        assert_abs_diff_eq!(u[0], 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(u[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn lasso_zero_residual_gives_zero() {
        let b = mat(3, 2, &[1.0, 0.2, -0.4, 1.0, 0.3, 0.3]);
        let u = lasso(&b, &DVector::zeros(3), &LassoConfig::new(0.5)).unwrap();
        assert_eq!(u, DVector::zeros(2));
    }

    #[test]
    fn lasso_without_penalty_is_exact_fit() {
        let u = lasso(
            &DMatrix::identity(2, 2),
            &DVector::from_vec(vec![3.0, 0.1]),
            &LassoConfig::new(0.0),
        )
        .unwrap();
        assert_abs_diff_eq!(u[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(u[1], 0.1, epsilon = 1e-12);
    }

    #[test]
    fn lasso_null_threshold() {
        // penalty at twice the largest correlation pins the solution at zero
        let b = mat(3, 2, &[1.0, 0.0, 0.5, 1.0, 0.0, -0.5]);
        let r = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let max_corr = (0..2).map(|j| b.column(j).dot(&r).abs()).fold(0.0, f64::max);
        let u = lasso(&b, &r, &LassoConfig::new(2.0 * max_corr)).unwrap();
        assert_eq!(u, DVector::zeros(2));
    }

    #[test]
    fn lasso_infinite_penalty_pins_zero() {
        let b = mat(2, 1, &[1.0, 2.0]);
        let r = DVector::from_vec(vec![5.0, -1.0]);
        let u = lasso(&b, &r, &LassoConfig::new(f64::INFINITY)).unwrap();
        assert_eq!(u, DVector::zeros(1));
    }

    #[test]
    fn lasso_nonconvergence_carries_iterate() {
        // one sweep over a correlated design cannot reach a 1e-16 residual
        let b = mat(2, 2, &[1.0, 0.9, 0.9, 1.0]);
        let r = DVector::from_vec(vec![1.0, -1.0]);
        let cfg = LassoConfig {
            penalty: 0.1,
            max_iterations: 1,
            convergence_tol: 1e-16,
        };
        match lasso(&b, &r, &cfg) {
            Err(Error::LassoNoConvergence {
                iterations,
                residual,
                last_iterate,
            }) => {
                assert_eq!(iterations, 1);
                assert!(residual > 1e-16);
                assert_eq!(last_iterate.len(), 2);
            }
            other => panic!("expected LassoNoConvergence, got {other:?}"),
        }
    }

    #[test]
    fn lasso_trace_is_nonincreasing() {
        let b = mat(4, 3, &[1.0, 0.3, -0.2, 0.5, 1.0, 0.4, -0.1, 0.2, 1.0, 0.7, -0.6, 0.1]);
        let r = DVector::from_vec(vec![2.0, -1.0, 0.5, 1.5]);
        let (_, trace) = lasso_with_trace(&b, &r, &LassoConfig::new(0.3)).unwrap();
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-10, "objective rose: {} -> {}", w[0], w[1]);
        }
    }
}
