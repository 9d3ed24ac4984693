//! Recovery of the initial state and the unknown inputs from partial
//! observations.
//!
//! The stacked observation equation `Y = Theta x[0] + Xi U` is solved either
//! jointly (minimum-norm least squares on `[Theta Xi]`) or in two stages:
//! project the inputs away with `W = I - Q Q^T` (`Q` an orthonormal basis of
//! the column space of `Xi`), recover `x[0]` by ridge regression on the
//! projected system, then back out the inputs from the remaining residual.
//!
//! The input `u[K-1]` never reaches any observation (the last block column
//! of `Xi` is zero), so recovered input sequences stop at `u[K-2]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::{
    default_rank_tolerance, ensure_finite_vec, lasso, least_squares, numerical_rank, ridge,
    LassoConfig,
};
use crate::observability::{ObservabilityPair, SensorSet};

/// Observations stacked in the layout of the observation equation:
/// `Y = [y[0]^T, y[1]^T, ..., y[K-1]^T]^T`, each `y[k]` over the sensor set.
#[derive(Debug, Clone)]
pub struct ObservationStack {
    y: DVector<f64>,
    horizon: usize,
    sensors: SensorSet,
}

impl ObservationStack {
    pub fn new(y: DVector<f64>, horizon: usize, sensors: SensorSet) -> Result<Self> {
        if y.len() != horizon * sensors.len() {
            return Err(Error::Dimension(format!(
                "stacked observations have length {}, expected K * |S| = {}",
                y.len(),
                horizon * sensors.len()
            )));
        }
        ensure_finite_vec("observations", &y)?;
        Ok(ObservationStack {
            y,
            horizon,
            sensors,
        })
    }

    /// Stacks a `K x |S|` row-per-time-step matrix.
    pub fn from_rows(rows: &DMatrix<f64>, sensors: SensorSet) -> Result<Self> {
        if rows.ncols() != sensors.len() {
            return Err(Error::Dimension(format!(
                "observation rows have {} columns, expected |S| = {}",
                rows.ncols(),
                sensors.len()
            )));
        }
        let horizon = rows.nrows();
        let mut y = DVector::zeros(horizon * sensors.len());
        for k in 0..horizon {
            y.rows_mut(k * sensors.len(), sensors.len())
                .tr_copy_from(&rows.row(k));
        }
        Self::new(y, horizon, sensors)
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn sensors(&self) -> &SensorSet {
        &self.sensors
    }
}

/// How a [`RecoveryResult`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecoveryMethod {
    JointLeastSquares,
    ProjectedRidge,
}

/// How to back the inputs out after the initial state is known.
#[derive(Debug, Clone)]
pub enum InputRecovery {
    /// Minimum-norm least squares on `Xi`.
    LeastSquares,
    /// Sparsity-enforcing l1 solve on `Xi`.
    Lasso(LassoConfig),
}

/// Recovered initial state and inputs, with conditioning evidence.
#[derive(Debug, Clone)]
pub struct RecoveryResult {
    /// Recovered `x[0]`.
    pub x0: DVector<f64>,
    /// Recovered inputs `u[0] .. u[K-2]`, one row per step; `u[K-1]` is
    /// structurally unrecoverable and excluded.
    pub inputs: DMatrix<f64>,
    /// Norm of `Y - Theta x0 - Xi U` at the returned solution.
    pub residual_norm: f64,
    pub method: RecoveryMethod,
    /// Rank of the system the solution was computed from.
    pub rank: usize,
    /// Whether that rank falls short of `n + (K-1) p`, i.e. the solution is
    /// a minimum-norm representative rather than unique.
    pub rank_deficient: bool,
    /// Smallest singular value counted towards the rank (0 when rank is 0).
    pub min_retained_singular_value: f64,
}

fn check_compatible(pair: &ObservabilityPair, obs: &ObservationStack) -> Result<()> {
    if pair.sensors() != obs.sensors() {
        return Err(Error::InvalidArgument(
            "observability pair and observations use different sensor sets".into(),
        ));
    }
    if pair.horizon() != obs.horizon() {
        return Err(Error::Dimension(format!(
            "pair horizon {} differs from observation horizon {}",
            pair.horizon(),
            obs.horizon()
        )));
    }
    if pair.theta().nrows() != obs.y().len() {
        return Err(Error::Dimension(format!(
            "pair has {} stacked rows but observations have length {}",
            pair.theta().nrows(),
            obs.y().len()
        )));
    }
    Ok(())
}

/// Splits the stacked unknown `[x[0]; u[0]; ...; u[K-1]]` and drops the
/// structurally unrecoverable last input block.
fn split_solution(w: &DVector<f64>, n: usize, p: usize, horizon: usize) -> (DVector<f64>, DMatrix<f64>) {
    let x0 = w.rows(0, n).into_owned();
    let recoverable = horizon.saturating_sub(1);
    let mut inputs = DMatrix::zeros(recoverable, p);
    for k in 0..recoverable {
        inputs
            .row_mut(k)
            .tr_copy_from(&w.rows(n + k * p, p));
    }
    (x0, inputs)
}

/// Minimum-norm least-squares solution of `Y = [Theta Xi] [x[0]; U]`.
///
/// When the perfect-observability rank condition holds and the observations
/// are consistent, the recoverable coordinates are exact and unique; the
/// result carries the rank evidence either way.
pub fn recover_joint(pair: &ObservabilityPair, obs: &ObservationStack) -> Result<RecoveryResult> {
    check_compatible(pair, obs)?;
    let n = pair.theta().ncols();
    let horizon = pair.horizon();
    let p = pair.xi().ncols().checked_div(horizon).unwrap_or(0);
    let target = n + horizon.saturating_sub(1) * p;

    if pair.theta().nrows() == 0 {
        // no observations at all: the minimum-norm answer is zero
        return Ok(RecoveryResult {
            x0: DVector::zeros(n),
            inputs: DMatrix::zeros(horizon.saturating_sub(1), p),
            residual_norm: 0.0,
            method: RecoveryMethod::JointLeastSquares,
            rank: 0,
            rank_deficient: target > 0,
            min_retained_singular_value: 0.0,
        });
    }

    let stacked = pair.stacked();
    let report = numerical_rank(&stacked, None)?;
    let solution = least_squares(&stacked, obs.y())?;
    let residual_norm = (&stacked * &solution - obs.y()).norm();
    let (x0, inputs) = split_solution(&solution, n, p, horizon);
    Ok(RecoveryResult {
        x0,
        inputs,
        residual_norm,
        method: RecoveryMethod::JointLeastSquares,
        rank: report.rank,
        rank_deficient: report.rank < target,
        min_retained_singular_value: report.min_retained_singular_value(),
    })
}

/// Orthogonal projector onto the complement of the column space of `Xi`,
/// computed from an orthonormal basis (never from `(Xi^T Xi)^{-1}`, which is
/// singular whenever `Xi` is rank deficient — as it structurally is here).
///
/// Satisfies `W^2 = W` and `W Xi = 0` to working precision; `Xi = 0` gives
/// `W = I`.
pub fn input_projector(xi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = xi.nrows();
    if m == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if xi.ncols() == 0 || xi.iter().all(|&v| v == 0.0) {
        return Ok(DMatrix::identity(m, m));
    }
    let svd = nalgebra::linalg::SVD::try_new(xi.clone(), true, false, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("SVD of Xi did not converge".into()))?;
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let tol = default_rank_tolerance(xi.nrows(), xi.ncols(), sigma_max);
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let u = svd.u.expect("u requested");
    let basis = u.columns(0, rank);
    Ok(DMatrix::identity(m, m) - basis * basis.transpose())
}

/// Two-stage recovery: ridge regression for `x[0]` on the input-projected
/// system, then input recovery from the remaining residual.
///
/// `eps = None` uses `1e-6 * sigma_max(W Theta)^2`.
pub fn recover_projected_ridge(
    pair: &ObservabilityPair,
    obs: &ObservationStack,
    eps: Option<f64>,
    input_recovery: InputRecovery,
) -> Result<RecoveryResult> {
    check_compatible(pair, obs)?;
    let n = pair.theta().ncols();
    let horizon = pair.horizon();
    let p = pair.xi().ncols().checked_div(horizon).unwrap_or(0);
    let target = n + horizon.saturating_sub(1) * p;

    if pair.theta().nrows() == 0 {
        return Ok(RecoveryResult {
            x0: DVector::zeros(n),
            inputs: DMatrix::zeros(horizon.saturating_sub(1), p),
            residual_norm: 0.0,
            method: RecoveryMethod::ProjectedRidge,
            rank: 0,
            rank_deficient: target > 0,
            min_retained_singular_value: 0.0,
        });
    }

    let w = input_projector(pair.xi())?;
    let w_theta = &w * pair.theta();
    let w_y = &w * obs.y();
    let theta_report = numerical_rank(&w_theta, None)?;
    let sigma_max = theta_report.singular_values.first().copied().unwrap_or(0.0);
    let eps = match eps {
        Some(e) => e,
        None => (1e-6 * sigma_max * sigma_max).max(f64::MIN_POSITIVE),
    };
    let x0 = ridge(&w_theta, &w_y, eps)?;

    // inputs from what the initial state does not explain
    let input_residual = obs.y() - pair.theta() * &x0;
    let u_full = match &input_recovery {
        InputRecovery::LeastSquares => least_squares(pair.xi(), &input_residual)?,
        InputRecovery::Lasso(cfg) => lasso(pair.xi(), &input_residual, cfg)?,
    };
    let residual_norm = (&input_residual - pair.xi() * &u_full).norm();

    let recoverable = horizon.saturating_sub(1);
    let mut inputs = DMatrix::zeros(recoverable, p);
    for k in 0..recoverable {
        inputs.row_mut(k).tr_copy_from(&u_full.rows(k * p, p));
    }

    let joint_rank = numerical_rank(&pair.stacked(), None)?.rank;
    Ok(RecoveryResult {
        x0,
        inputs,
        residual_norm,
        method: RecoveryMethod::ProjectedRidge,
        rank: joint_rank,
        rank_deficient: joint_rank < target,
        min_retained_singular_value: theta_report.min_retained_singular_value(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fraccore::{simulate_recursive, FractionalOrders, SystemModel};
    use crate::observability::build_theta_xi;
    use approx::assert_abs_diff_eq;

    /// Same two-state example as the observability tests: perfectly
    /// observable with both sensors at K = 2.
    fn example() -> (SystemModel, ObservabilityPair) {
        let model = SystemModel::new(
            FractionalOrders::uniform(1.0, 2).unwrap(),
            DMatrix::zeros(2, 2),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
        )
        .unwrap();
        let pair = build_theta_xi(&model, &SensorSet::full(2), 2).unwrap();
        (model, pair)
    }

    #[test]
    fn joint_recovery_round_trip() {
        let (model, pair) = example();
        let x0 = DVector::from_vec(vec![1.0, -1.0]);
        let inputs = DMatrix::from_row_slice(1, 1, &[2.0]);
        let traj = simulate_recursive(&model, &x0, &inputs, 2).unwrap();
        let obs = ObservationStack::from_rows(traj.states(), SensorSet::full(2)).unwrap();

        let result = recover_joint(&pair, &obs).unwrap();
        assert!(!result.rank_deficient);
        assert_abs_diff_eq!(result.x0[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(result.x0[1], -1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(result.inputs[(0, 0)], 2.0, epsilon = 1e-9);
        assert!(result.residual_norm < 1e-10);
    }

    #[test]
    fn joint_recovery_zero_data() {
        let (_, pair) = example();
        let obs = ObservationStack::new(DVector::zeros(4), 2, SensorSet::full(2)).unwrap();
        let result = recover_joint(&pair, &obs).unwrap();
        assert_eq!(result.x0, DVector::zeros(2));
        assert_eq!(result.inputs, DMatrix::zeros(1, 1));
    }

    #[test]
    fn joint_recovery_flags_rank_deficiency() {
        let (model, _) = example();
        let sensors = SensorSet::new(vec![1], 2).unwrap();
        let pair = build_theta_xi(&model, &sensors, 2).unwrap();
        let obs = ObservationStack::new(DVector::from_vec(vec![1.0, 1.0]), 2, sensors).unwrap();
        let result = recover_joint(&pair, &obs).unwrap();
        assert!(result.rank_deficient);
        assert_eq!(result.rank, 1);
    }

    #[test]
    fn projector_of_zero_xi_is_identity() {
        let w = input_projector(&DMatrix::zeros(3, 2)).unwrap();
        assert_eq!(w, DMatrix::identity(3, 3));
    }

    #[test]
    fn projector_with_orthonormal_columns() {
        // Xi = [e1 e2 0]: W must be I - e1 e1^T - e2 e2^T
        let mut xi = DMatrix::zeros(3, 3);
        xi[(0, 0)] = 1.0;
        xi[(1, 1)] = 1.0;
        let w = input_projector(&xi).unwrap();
        let mut expected = DMatrix::zeros(3, 3);
        expected[(2, 2)] = 1.0;
        assert!((w - expected).abs().max() < 1e-12);
    }

    #[test]
    fn projector_annihilates_and_is_idempotent() {
        let xi = DMatrix::from_row_slice(
            4,
            2,
            &[1.0, 0.5, -2.0, 1.0, 0.25, -0.75, 3.0, 0.0],
        );
        let w = input_projector(&xi).unwrap();
        assert!((&w * &xi).abs().max() <= 1e-10 * xi.abs().max());
        assert!((&w * &w - &w).abs().max() <= 1e-10);
    }

    #[test]
    fn ridge_recovery_matches_joint_on_observable_instance() {
        let (model, pair) = example();
        let x0 = DVector::from_vec(vec![0.7, -0.2]);
        let inputs = DMatrix::from_row_slice(1, 1, &[-1.5]);
        let traj = simulate_recursive(&model, &x0, &inputs, 2).unwrap();
        let obs = ObservationStack::from_rows(traj.states(), SensorSet::full(2)).unwrap();

        let joint = recover_joint(&pair, &obs).unwrap();
        let ridge = recover_projected_ridge(&pair, &obs, Some(1e-10), InputRecovery::LeastSquares)
            .unwrap();
        assert!((joint.x0 - &ridge.x0).norm() < 1e-6);
        assert!((joint.inputs - &ridge.inputs).abs().max() < 1e-6);
    }

    #[test]
    fn ridge_recovery_zero_data_is_zero() {
        let (_, pair) = example();
        let obs = ObservationStack::new(DVector::zeros(4), 2, SensorSet::full(2)).unwrap();
        let result =
            recover_projected_ridge(&pair, &obs, None, InputRecovery::LeastSquares).unwrap();
        assert!(result.x0.norm() < 1e-14);
    }

    #[test]
    fn ridge_shrinks_with_larger_eps() {
        let (model, pair) = example();
        let x0 = DVector::from_vec(vec![2.0, 1.0]);
        let inputs = DMatrix::from_row_slice(1, 1, &[0.5]);
        let traj = simulate_recursive(&model, &x0, &inputs, 2).unwrap();
        let obs = ObservationStack::from_rows(traj.states(), SensorSet::full(2)).unwrap();

        let loose = recover_projected_ridge(&pair, &obs, Some(1e-2), InputRecovery::LeastSquares)
            .unwrap();
        let tight = recover_projected_ridge(&pair, &obs, Some(1e-6), InputRecovery::LeastSquares)
            .unwrap();
        assert!(loose.x0.norm() <= tight.x0.norm() + 1e-12);
    }

    #[test]
    fn sparse_input_recovery_path() {
        let (model, pair) = example();
        let x0 = DVector::from_vec(vec![1.0, -1.0]);
        let inputs = DMatrix::from_row_slice(1, 1, &[2.0]);
        let traj = simulate_recursive(&model, &x0, &inputs, 2).unwrap();
        let obs = ObservationStack::from_rows(traj.states(), SensorSet::full(2)).unwrap();

        let result = recover_projected_ridge(
            &pair,
            &obs,
            Some(1e-12),
            InputRecovery::Lasso(LassoConfig::new(1e-6)),
        )
        .unwrap();
        assert_abs_diff_eq!(result.inputs[(0, 0)], 2.0, epsilon = 1e-4);
    }

    #[test]
    fn mismatched_sensor_sets_are_rejected() {
        let (model, pair) = example();
        let other = SensorSet::new(vec![0], 2).unwrap();
        let _ = model;
        let obs = ObservationStack::new(DVector::zeros(2), 2, other).unwrap();
        assert!(recover_joint(&pair, &obs).is_err());
    }
}
