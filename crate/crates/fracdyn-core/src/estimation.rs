//! Alternating (EM-style) estimation of the system matrix and the sparse
//! unknown inputs, plus the fractional-order pre-estimation step.
//!
//! Given measured states `x[0..T-1]`, a known coupling matrix `B`, and
//! fractional orders `alpha` (estimated from the data when not supplied),
//! the truncated fractional difference `z[k]` turns the dynamics into the
//! regression `z[k] = A x[k] + B u[k] + e[k]`. The scheme alternates
//!
//! * E-step: per time step, `u[k] = argmin_u ||z[k] - A x[k] - B u||_2^2 +
//!   penalty * ||u||_1` (a lasso with `penalty = 2 sigma^2 lambda`), and
//! * M-step: per state, `a_i = argmin_a ||Z~_i - X a||_2^2` with the
//!   input-corrected targets `Z~_i = Z_i - U b_i`,
//!
//! which descends the penalized objective
//! `F(A, U) = sum_k ||z[k] - A x[k] - B u[k]||_2^2 + penalty * sum_k ||u[k]||_1`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fraccore::{fractional_difference, psi_table, FractionalOrders, SystemModel, Trajectory};
use crate::numerics::{lasso, least_squares, LassoConfig};

/// Settings for [`run_em`].
///
/// The effective l1 penalty is always derived as `2 * sigma2 * lambda`
/// (see [`EmConfig::penalty`]); it is never stored separately.
#[derive(Debug, Clone)]
pub struct EmConfig {
    /// Sparsity weight of the Laplacian input prior. `+inf` forces every
    /// estimated input to zero, reproducing the no-input estimator.
    pub lambda: f64,
    /// Noise variance of the observation model; enters only through the
    /// derived penalty.
    pub sigma2: f64,
    /// Cap on the number of E/M iterations.
    pub max_iterations: usize,
    /// Convergence threshold on the objective change, relative to the
    /// initial objective value.
    pub objective_tol: f64,
    /// Truncation depth `J` of the fractional difference; the effective
    /// depth is `min(J, T)`.
    pub truncation: usize,
    /// Template for the per-time-step lasso solves; its `penalty` field is
    /// overwritten with the derived penalty.
    pub lasso: LassoConfig,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            lambda: 0.1,
            sigma2: 1.0,
            max_iterations: 50,
            objective_tol: 1e-6,
            truncation: 64,
            lasso: LassoConfig::default(),
        }
    }
}

impl EmConfig {
    /// Derived l1 penalty `2 * sigma2 * lambda`.
    pub fn penalty(&self) -> f64 {
        2.0 * self.sigma2 * self.lambda
    }

    fn validate(&self) -> Result<()> {
        if self.lambda.is_nan() || self.lambda < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        if !self.sigma2.is_finite() || self.sigma2 <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "sigma2 must be a positive real, got {}",
                self.sigma2
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument(
                "max_iterations must be at least 1".into(),
            ));
        }
        if self.objective_tol.is_nan() || self.objective_tol <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "objective_tol must be positive, got {}",
                self.objective_tol
            )));
        }
        if self.truncation == 0 {
            return Err(Error::InvalidArgument(
                "truncation J must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Output of [`run_em`].
#[derive(Debug, Clone)]
pub struct EmEstimate {
    /// Fitted system matrix.
    pub a_hat: DMatrix<f64>,
    /// Recovered inputs, one row per time step `0..T-1`.
    pub u_hat: DMatrix<f64>,
    /// Penalized objective after initialization and after each iteration;
    /// nonincreasing up to solver tolerance.
    pub objective_trace: Vec<f64>,
    /// Number of E/M iterations actually run.
    pub iterations_run: usize,
    /// Whether the objective change fell below the tolerance before the
    /// iteration cap.
    pub converged: bool,
    /// The fractional orders used (supplied or estimated).
    pub orders: FractionalOrders,
}

/// Affine map from the wavelet log-variance slope `beta` to a fractional
/// order: `alpha = slope_scale * beta + offset`.
#[derive(Debug, Clone, Copy)]
pub struct AlphaMap {
    pub slope_scale: f64,
    pub offset: f64,
}

impl Default for AlphaMap {
    fn default() -> Self {
        // white noise (slope 0) maps to 0.5, a random walk (slope 2) to 1.5
        AlphaMap {
            slope_scale: 0.5,
            offset: 0.5,
        }
    }
}

impl AlphaMap {
    pub fn apply(&self, slope: f64) -> f64 {
        self.slope_scale * slope + self.offset
    }
}

/// Per-channel fractional-order estimates with regression diagnostics.
#[derive(Debug, Clone)]
pub struct AlphaEstimate {
    /// Estimated orders (relaxed construction: estimates from noisy data can
    /// leave the positive range).
    pub orders: FractionalOrders,
    /// Fitted log2-variance slope per channel.
    pub slopes: DVector<f64>,
    /// Residual norm of each per-channel slope regression.
    pub fit_residuals: DVector<f64>,
}

/// Anything that can produce fractional orders from measured states.
pub trait OrderEstimator {
    fn estimate(&self, states: &DMatrix<f64>) -> Result<AlphaEstimate>;
}

/// Slope-based order estimator: per channel, a dyadic Haar detail pyramid,
/// then a regression of `log2(mean detail energy)` on the level index, then
/// an affine slope-to-order map.
#[derive(Debug, Clone)]
pub struct HaarSlopeEstimator {
    pub min_level: usize,
    pub max_level: usize,
    pub map: AlphaMap,
}

impl HaarSlopeEstimator {
    pub fn new(min_level: usize, max_level: usize) -> Result<Self> {
        if min_level == 0 {
            return Err(Error::InvalidArgument(
                "min_level must be at least 1".into(),
            ));
        }
        if max_level < min_level + 1 {
            return Err(Error::InvalidArgument(
                "need at least 2 levels: max_level must exceed min_level".into(),
            ));
        }
        Ok(HaarSlopeEstimator {
            min_level,
            max_level,
            map: AlphaMap::default(),
        })
    }

    /// Default level range for a signal of length `t`: levels 1 through
    /// `log2(t) - 2`, capped at 8.
    pub fn for_length(t: usize) -> Result<Self> {
        if t < 16 {
            return Err(Error::InvalidArgument(format!(
                "order estimation needs at least 16 samples, got {t}"
            )));
        }
        let max = (usize::BITS - 1 - t.leading_zeros()) as usize; // floor(log2 t)
        Self::new(1, (max - 2).clamp(2, 8))
    }
}

impl OrderEstimator for HaarSlopeEstimator {
    fn estimate(&self, states: &DMatrix<f64>) -> Result<AlphaEstimate> {
        let t = states.nrows();
        let needed = 1usize << (self.max_level + 1);
        if t < needed {
            return Err(Error::InvalidArgument(format!(
                "level {} needs at least {needed} samples, got {t}",
                self.max_level
            )));
        }
        let n = states.ncols();
        if n == 0 {
            return Err(Error::InvalidArgument("no channels".into()));
        }
        let mut alphas = Vec::with_capacity(n);
        let mut slopes = DVector::zeros(n);
        let mut residuals = DVector::zeros(n);
        for channel in 0..n {
            let series: Vec<f64> = states.column(channel).iter().copied().collect();
            let logvars =
                haar_detail_log_variances(&series, self.min_level, self.max_level, channel)?;
            let (slope, residual) = slope_regression(self.min_level, &logvars);
            slopes[channel] = slope;
            residuals[channel] = residual;
            alphas.push(self.map.apply(slope));
        }
        Ok(AlphaEstimate {
            orders: FractionalOrders::new_relaxed(alphas)?,
            slopes,
            fit_residuals: residuals,
        })
    }
}

/// Convenience wrapper over [`HaarSlopeEstimator`] with the default
/// slope-to-order map.
pub fn estimate_alpha(states: &DMatrix<f64>, scale_range: (usize, usize)) -> Result<AlphaEstimate> {
    HaarSlopeEstimator::new(scale_range.0, scale_range.1)?.estimate(states)
}

/// `log2` of the mean detail energy at each level in `min..=max` of an
/// orthonormal Haar pyramid over `series`.
fn haar_detail_log_variances(
    series: &[f64],
    min_level: usize,
    max_level: usize,
    channel: usize,
) -> Result<Vec<f64>> {
    let mut approx = series.to_vec();
    let mut out = Vec::with_capacity(max_level - min_level + 1);
    for level in 1..=max_level {
        let pairs = approx.len() / 2;
        if pairs < 2 {
            return Err(Error::InvalidArgument(format!(
                "level {level} leaves fewer than 2 detail coefficients"
            )));
        }
        let mut next = Vec::with_capacity(pairs);
        let mut energy = 0.0;
        for m in 0..pairs {
            let a = approx[2 * m];
            let b = approx[2 * m + 1];
            next.push((a + b) * std::f64::consts::FRAC_1_SQRT_2);
            let d = (a - b) * std::f64::consts::FRAC_1_SQRT_2;
            energy += d * d;
        }
        if level >= min_level {
            let mean_energy = energy / pairs as f64;
            if mean_energy <= 0.0 {
                return Err(Error::DegenerateSignal { channel });
            }
            out.push(mean_energy.log2());
        }
        approx = next;
    }
    Ok(out)
}

/// Least-squares slope of `values` against the level index, plus the
/// regression residual norm.
fn slope_regression(first_level: usize, values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let xs: Vec<f64> = (0..values.len()).map(|i| (first_level + i) as f64).collect();
    let x_mean = xs.iter().sum::<f64>() / m;
    let y_mean = values.iter().sum::<f64>() / m;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(values) {
        num += (x - x_mean) * (y - y_mean);
        den += (x - x_mean) * (x - x_mean);
    }
    let slope = num / den;
    let intercept = y_mean - slope * x_mean;
    let residual: f64 = xs
        .iter()
        .zip(values)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum::<f64>()
        .sqrt();
    (slope, residual)
}

/// Initial system matrix: row `i` is the least-squares regression of `Z_i`
/// on `X`. Rank-deficient designs yield the minimum-norm rows.
pub fn init_a(z: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if z.nrows() != x.nrows() {
        return Err(Error::Dimension(format!(
            "Z has {} rows but X has {}",
            z.nrows(),
            x.nrows()
        )));
    }
    let n = z.ncols();
    let mut a = DMatrix::zeros(n, x.ncols());
    for i in 0..n {
        let target = z.column(i).into_owned();
        let row = least_squares(x, &target)?;
        a.row_mut(i).tr_copy_from(&row);
    }
    Ok(a)
}

/// E-step: per time step `k`, solve the lasso for `u[k]` against the
/// residual `z[k] - A x[k]`. Rows are independent.
pub fn e_step(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    z: &DMatrix<f64>,
    x: &DMatrix<f64>,
    cfg: &LassoConfig,
) -> Result<DMatrix<f64>> {
    if z.nrows() != x.nrows() {
        return Err(Error::Dimension(format!(
            "Z has {} rows but X has {}",
            z.nrows(),
            x.nrows()
        )));
    }
    if a.nrows() != z.ncols() || a.ncols() != x.ncols() {
        return Err(Error::Dimension(format!(
            "A is {}x{}, expected {}x{}",
            a.nrows(),
            a.ncols(),
            z.ncols(),
            x.ncols()
        )));
    }
    if b.nrows() != z.ncols() {
        return Err(Error::Dimension(format!(
            "B has {} rows, expected {}",
            b.nrows(),
            z.ncols()
        )));
    }
    let steps = z.nrows();
    let mut u = DMatrix::zeros(steps, b.ncols());
    for k in 0..steps {
        let residual = z.row(k).transpose() - a * x.row(k).transpose();
        let uk = lasso(b, &residual, cfg).map_err(|e| Error::EStepFailed {
            index: k,
            source: Box::new(e),
        })?;
        u.row_mut(k).tr_copy_from(&uk);
    }
    Ok(u)
}

/// M-step: per state `i`, least squares of the input-corrected target
/// `Z~_i = Z_i - U b_i` on `X`.
pub fn m_step(
    z: &DMatrix<f64>,
    x: &DMatrix<f64>,
    u: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if u.nrows() != z.nrows() {
        return Err(Error::Dimension(format!(
            "U has {} rows but Z has {}",
            u.nrows(),
            z.nrows()
        )));
    }
    if u.ncols() != b.ncols() {
        return Err(Error::Dimension(format!(
            "U has {} columns but B has {}",
            u.ncols(),
            b.ncols()
        )));
    }
    let corrected = z - u * b.transpose();
    init_a(&corrected, x)
}

/// Penalized objective
/// `F(A, U) = sum_k ||z[k] - A x[k] - B u[k]||_2^2 + penalty * sum_k ||u[k]||_1`.
pub fn penalized_objective(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    z: &DMatrix<f64>,
    x: &DMatrix<f64>,
    u: &DMatrix<f64>,
    penalty: f64,
) -> f64 {
    let residual = z - x * a.transpose() - u * b.transpose();
    let l1: f64 = u.iter().map(|v| v.abs()).sum();
    let pen_term = if l1 == 0.0 { 0.0 } else { penalty * l1 };
    residual.norm_squared() + pen_term
}

/// Runs the alternating estimation loop on measured states.
///
/// When `alpha` is `None` the orders are first estimated with the default
/// [`HaarSlopeEstimator`] for the data length. The returned objective trace
/// starts at the no-input initialization and has one more entry per
/// iteration.
pub fn run_em(
    trajectory: &Trajectory,
    b: &DMatrix<f64>,
    cfg: &EmConfig,
    alpha: Option<&FractionalOrders>,
) -> Result<EmEstimate> {
    cfg.validate()?;
    let states = trajectory.states();
    let t = states.nrows();
    let n = states.ncols();
    if t < 2 {
        return Err(Error::InvalidArgument(
            "estimation needs at least 2 samples".into(),
        ));
    }
    if b.nrows() != n {
        return Err(Error::Dimension(format!(
            "B has {} rows but data has {n} channels",
            b.nrows()
        )));
    }

    // A flat channel carries no dynamics to regress on.
    for channel in 0..n {
        let col = states.column(channel);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in col.iter() {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        if hi == lo {
            return Err(Error::DegenerateSignal { channel });
        }
    }

    let orders = match alpha {
        Some(orders) => {
            if orders.len() != n {
                return Err(Error::Dimension(format!(
                    "{} orders supplied for {n} channels",
                    orders.len()
                )));
            }
            orders.clone()
        }
        None => HaarSlopeEstimator::for_length(t)?.estimate(states)?.orders,
    };

    let truncation = cfg.truncation.min(t);
    let z = fractional_difference(states, &orders, truncation)?;
    let x = states.rows(0, t - 1).into_owned();

    let penalty = cfg.penalty();
    let mut lasso_cfg = cfg.lasso.clone();
    lasso_cfg.penalty = penalty;

    let mut a = init_a(&z, &x)?;
    let mut u = DMatrix::zeros(t - 1, b.ncols());
    let mut trace = vec![penalized_objective(&a, b, &z, &x, &u, penalty)];
    let threshold = cfg.objective_tol * trace[0].max(f64::MIN_POSITIVE);

    let mut converged = false;
    let mut iterations_run = 0;
    for _ in 0..cfg.max_iterations {
        u = e_step(&a, b, &z, &x, &lasso_cfg)?;
        a = m_step(&z, &x, &u, b)?;
        let objective = penalized_objective(&a, b, &z, &x, &u, penalty);
        let previous = *trace.last().expect("trace starts nonempty");
        trace.push(objective);
        iterations_run += 1;
        if (previous - objective).abs() <= threshold {
            converged = true;
            break;
        }
    }

    Ok(EmEstimate {
        a_hat: a,
        u_hat: u,
        objective_trace: trace,
        iterations_run,
        converged,
        orders,
    })
}

/// One-step-ahead predictions over a measured record: row `k` is the
/// prediction of `x[k+1]` from the true history and the input row `u[k]`.
/// Uses the same truncated memory window as the fractional difference, so
/// the prediction residual equals the regression residual.
pub fn one_step_predictions(
    model: &SystemModel,
    states: &DMatrix<f64>,
    inputs: &DMatrix<f64>,
    truncation: usize,
) -> Result<DMatrix<f64>> {
    let n = model.n();
    if states.ncols() != n {
        return Err(Error::Dimension(format!(
            "states have {} columns, expected {n}",
            states.ncols()
        )));
    }
    let t = states.nrows();
    if t < 2 {
        return Err(Error::InvalidArgument(
            "one-step prediction needs at least 2 samples".into(),
        ));
    }
    if inputs.ncols() != model.p() {
        return Err(Error::Dimension(format!(
            "inputs have {} columns, expected p = {}",
            inputs.ncols(),
            model.p()
        )));
    }
    if inputs.nrows() < t - 1 {
        return Err(Error::Dimension(format!(
            "need {} input rows, got {}",
            t - 1,
            inputs.nrows()
        )));
    }
    let truncation = truncation.min(t).max(1);
    let psi = psi_table(model.orders(), truncation)?;
    let mut out = DMatrix::zeros(t - 1, n);
    for k in 0..t - 1 {
        let mut next = model.a() * states.row(k).transpose()
            + model.b() * inputs.row(k).transpose();
        for j in 1..truncation {
            let idx = (k + 1) as isize - j as isize;
            if idx < 0 {
                break;
            }
            let past = states.row(idx as usize);
            for i in 0..n {
                next[i] -= psi.value(i, j) * past[i];
            }
        }
        out.row_mut(k).tr_copy_from(&next);
    }
    Ok(out)
}

/// Rolls the model forward `steps` steps past the end of `history`.
///
/// Input row `k` of `inputs` is used as `u[k]` (indexed from the start of
/// the history); any step whose input is beyond the supplied rows treats the
/// input as zero, since future stimuli are unknown. Returns the predicted
/// block, `steps x n`.
pub fn predict(
    model: &SystemModel,
    history: &DMatrix<f64>,
    inputs: &DMatrix<f64>,
    steps: usize,
    truncation: usize,
) -> Result<DMatrix<f64>> {
    let n = model.n();
    if history.ncols() != n {
        return Err(Error::Dimension(format!(
            "history has {} columns, expected {n}",
            history.ncols()
        )));
    }
    if history.nrows() == 0 {
        return Err(Error::InvalidArgument(
            "prediction needs at least one historical sample".into(),
        ));
    }
    if inputs.ncols() != model.p() {
        return Err(Error::Dimension(format!(
            "inputs have {} columns, expected p = {}",
            inputs.ncols(),
            model.p()
        )));
    }
    if steps == 0 {
        return Ok(DMatrix::zeros(0, n));
    }

    let h = history.nrows();
    let total = h + steps;
    let truncation = truncation.min(total).max(1);
    let psi = psi_table(model.orders(), truncation)?;

    // extended record: measured history followed by predictions
    let mut extended = DMatrix::zeros(total, n);
    extended.rows_mut(0, h).copy_from(history);

    for k in (h - 1)..(total - 1) {
        let u_k = if k < inputs.nrows() {
            model.b() * inputs.row(k).transpose()
        } else {
            DVector::zeros(n)
        };
        let mut next = model.a() * extended.row(k).transpose() + u_k;
        for j in 1..truncation {
            let idx = (k + 1) as isize - j as isize;
            if idx < 0 {
                break;
            }
            let past = extended.row(idx as usize);
            for i in 0..n {
                next[i] -= psi.value(i, j) * past[i];
            }
        }
        extended.row_mut(k + 1).tr_copy_from(&next);
    }
    Ok(extended.rows(h, steps).into_owned())
}
