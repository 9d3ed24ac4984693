//! Fractional-order coefficients, state recursion, G-matrix kernel, and
//! simulation.
//!
//! The state update is
//!
//! ```text
//! x[k+1] = A x[k] - sum_{j=1}^{k+1} D(alpha, j) x[k+1-j] + B u[k]
//! ```
//!
//! where `D(alpha, j) = diag(psi(alpha_1, j), ..., psi(alpha_n, j))` and the
//! `psi` weights are the binomial-series coefficients of the fractional
//! difference operator. The same trajectory has the closed form
//!
//! ```text
//! x[k] = G_k x[0] + sum_{j=0}^{k-1} G_{k-1-j} B u[j]
//! ```
//!
//! built from the kernel sequence `G_0 = I`,
//! `G_k = sum_{j=0}^{k-1} A_j G_{k-1-j}` with `A_0 = A - D(alpha, 1)` and
//! `A_j = -D(alpha, j+1)` for `j >= 1`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::{ensure_finite, ensure_finite_vec};

/// Per-state fractional orders `alpha_i`.
///
/// [`FractionalOrders::new`] requires every order to be strictly positive
/// (long-memory signals); [`FractionalOrders::new_relaxed`] drops that bound
/// and only requires finiteness, for callers that knowingly work outside it
/// (e.g. estimates from noisy data).
#[derive(Debug, Clone, PartialEq)]
pub struct FractionalOrders {
    alpha: DVector<f64>,
}

impl FractionalOrders {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        let orders = Self::new_relaxed(alpha)?;
        if let Some(bad) = orders.alpha.iter().find(|a| **a <= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "fractional order must be positive, got {bad} (use new_relaxed to override)"
            )));
        }
        Ok(orders)
    }

    pub fn new_relaxed(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one fractional order is required".into(),
            ));
        }
        let alpha = DVector::from_vec(alpha);
        ensure_finite_vec("fractional orders", &alpha)?;
        Ok(FractionalOrders { alpha })
    }

    /// All states share one order.
    pub fn uniform(alpha: f64, n: usize) -> Result<Self> {
        Self::new(vec![alpha; n])
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn get(&self, state: usize) -> f64 {
        self.alpha[state]
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.alpha
    }
}

/// The system tuple `(alpha, A, B)` with dimensions `n` (states) and `p`
/// (inputs), `p < n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    orders: FractionalOrders,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl SystemModel {
    pub fn new(orders: FractionalOrders, a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        let n = orders.len();
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::Dimension(format!(
                "A must be {n}x{n}, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n {
            return Err(Error::Dimension(format!(
                "B must have {n} rows, got {}",
                b.nrows()
            )));
        }
        if b.ncols() >= n {
            return Err(Error::InvalidArgument(format!(
                "input count p = {} must be strictly less than state count n = {n}",
                b.ncols()
            )));
        }
        ensure_finite("A", &a)?;
        ensure_finite("B", &b)?;
        Ok(SystemModel { orders, a, b })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn p(&self) -> usize {
        self.b.ncols()
    }

    pub fn orders(&self) -> &FractionalOrders {
        &self.orders
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
}

/// Table of `psi(alpha_i, j)` values, one row per state, one column per lag.
///
/// Row `i` holds the binomial-series weights of the order-`alpha_i`
/// difference: column 0 is 1, column 1 is `-alpha_i`, and column `j` follows
/// the multiplicative recurrence `psi(a, j) = psi(a, j-1) * (j - 1 - a) / j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiTable {
    orders: FractionalOrders,
    coefficients: DMatrix<f64>,
}

impl PsiTable {
    pub fn orders(&self) -> &FractionalOrders {
        &self.orders
    }

    /// Number of lags covered (columns).
    pub fn horizon(&self) -> usize {
        self.coefficients.ncols()
    }

    pub fn value(&self, state: usize, lag: usize) -> f64 {
        self.coefficients[(state, lag)]
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }
}

/// Weights `psi(alpha, 0..len)` for a single order, by the multiplicative
/// recurrence. Equals the gamma-ratio formula `G(j-a)/(G(-a) G(j+1))` but
/// avoids its overflow and its poles at integer `alpha`.
pub fn psi_weights(alpha: f64, len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    let mut value = 1.0;
    for j in 0..len {
        if j > 0 {
            value *= (j as f64 - 1.0 - alpha) / j as f64;
        }
        out.push(value);
    }
    out
}

/// Builds the `n x J` table of fractional-difference weights.
pub fn psi_table(orders: &FractionalOrders, j_len: usize) -> Result<PsiTable> {
    if j_len == 0 {
        return Err(Error::InvalidArgument(
            "psi_table: horizon J must be at least 1".into(),
        ));
    }
    let n = orders.len();
    let mut coefficients = DMatrix::zeros(n, j_len);
    for i in 0..n {
        let row = psi_weights(orders.get(i), j_len);
        for (j, v) in row.into_iter().enumerate() {
            coefficients[(i, j)] = v;
        }
    }
    Ok(PsiTable {
        orders: orders.clone(),
        coefficients,
    })
}

/// Diagonal matrix `D(alpha, j) = diag(psi(alpha_1, j), ..., psi(alpha_n, j))`
/// for a lag `j >= 1`.
pub fn d_matrix(orders: &FractionalOrders, j: usize) -> Result<DMatrix<f64>> {
    if j == 0 {
        return Err(Error::InvalidArgument(
            "d_matrix: lag j must be at least 1".into(),
        ));
    }
    let table = psi_table(orders, j + 1)?;
    let diag: Vec<f64> = (0..orders.len()).map(|i| table.value(i, j)).collect();
    Ok(DMatrix::from_diagonal(&DVector::from_vec(diag)))
}

/// The kernel sequence `G_0 ... G_{K-1}` for a model, plus the model itself
/// so the closed-form solution can be evaluated from the kernel alone.
#[derive(Debug, Clone)]
pub struct GKernel {
    model: SystemModel,
    matrices: Vec<DMatrix<f64>>,
}

impl GKernel {
    pub fn model(&self) -> &SystemModel {
        &self.model
    }

    pub fn horizon(&self) -> usize {
        self.matrices.len()
    }

    pub fn g(&self, k: usize) -> &DMatrix<f64> {
        &self.matrices[k]
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }
}

/// Materializes `G_0 ... G_{K-1}`.
///
/// `G_0 = I` exactly; `G_k = sum_{j=0}^{k-1} A_j G_{k-1-j}` with
/// `A_0 = A - D(alpha, 1)` and `A_j = -D(alpha, j+1)`.
pub fn g_kernel(model: &SystemModel, k_len: usize) -> Result<GKernel> {
    if k_len == 0 {
        return Err(Error::InvalidArgument(
            "g_kernel: horizon K must be at least 1".into(),
        ));
    }
    let n = model.n();
    let psi = psi_table(model.orders(), k_len.max(2))?;

    // A_j as diagonal corrections: A_0 = A - D(alpha,1), A_j = -D(alpha,j+1)
    let a_term = |j: usize| -> DMatrix<f64> {
        let mut m = if j == 0 {
            model.a().clone()
        } else {
            DMatrix::zeros(n, n)
        };
        for i in 0..n {
            m[(i, i)] -= psi.value(i, j + 1);
        }
        m
    };

    let mut matrices = Vec::with_capacity(k_len);
    matrices.push(DMatrix::identity(n, n));
    for k in 1..k_len {
        let mut g = DMatrix::zeros(n, n);
        for j in 0..k {
            g += a_term(j) * &matrices[k - 1 - j];
        }
        matrices.push(g);
    }
    Ok(GKernel {
        model: model.clone(),
        matrices,
    })
}

/// A simulated or measured run: states row-per-time-step, inputs one row
/// shorter (input `u[k]` acts between states `k` and `k+1`).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    states: DMatrix<f64>,
    inputs: DMatrix<f64>,
    start_index: i64,
}

impl Trajectory {
    pub fn new(states: DMatrix<f64>, inputs: DMatrix<f64>, start_index: i64) -> Result<Self> {
        if states.nrows() == 0 {
            return Err(Error::InvalidArgument(
                "trajectory needs at least one state sample".into(),
            ));
        }
        if inputs.nrows() != states.nrows() - 1 {
            return Err(Error::Dimension(format!(
                "trajectory with {} states needs {} input rows, got {}",
                states.nrows(),
                states.nrows() - 1,
                inputs.nrows()
            )));
        }
        ensure_finite("trajectory states", &states)?;
        ensure_finite("trajectory inputs", &inputs)?;
        Ok(Trajectory {
            states,
            inputs,
            start_index,
        })
    }

    /// Wraps measured states with no input information (zero input columns).
    pub fn from_states(states: DMatrix<f64>) -> Result<Self> {
        let rows = states.nrows().saturating_sub(1);
        let inputs = DMatrix::zeros(rows, 0);
        Trajectory::new(states, inputs, 0)
    }

    /// Number of time samples `T`.
    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires at least one sample
    }

    pub fn states(&self) -> &DMatrix<f64> {
        &self.states
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn start_index(&self) -> i64 {
        self.start_index
    }

    pub fn state_at(&self, k: usize) -> DVector<f64> {
        self.states.row(k).transpose()
    }
}

/// Simulates the state recursion for `len` steps starting at `x0`, using the
/// full (untruncated) history available within the horizon.
pub fn simulate_recursive(
    model: &SystemModel,
    x0: &DVector<f64>,
    inputs: &DMatrix<f64>,
    len: usize,
) -> Result<Trajectory> {
    let n = model.n();
    if x0.len() != n {
        return Err(Error::Dimension(format!(
            "x0 has length {}, expected {n}",
            x0.len()
        )));
    }
    if len == 0 {
        return Err(Error::InvalidArgument(
            "simulation length must be at least 1".into(),
        ));
    }
    if inputs.ncols() != model.p() {
        return Err(Error::Dimension(format!(
            "inputs have {} columns, expected p = {}",
            inputs.ncols(),
            model.p()
        )));
    }
    if inputs.nrows() + 1 < len {
        return Err(Error::Dimension(format!(
            "simulating {len} steps needs at least {} input rows, got {}",
            len - 1,
            inputs.nrows()
        )));
    }
    ensure_finite_vec("x0", x0)?;
    ensure_finite("inputs", inputs)?;

    let psi = psi_table(model.orders(), len.max(2))?;
    let mut states = DMatrix::zeros(len, n);
    states.row_mut(0).tr_copy_from(x0);

    for k in 0..len.saturating_sub(1) {
        let xk = states.row(k).transpose();
        let mut next = model.a() * &xk + model.b() * inputs.row(k).transpose();
        // memory term: sum_{j=1}^{k+1} D(alpha, j) x[k+1-j]
        for j in 1..=(k + 1) {
            let past = states.row(k + 1 - j);
            for i in 0..n {
                next[i] -= psi.value(i, j) * past[i];
            }
        }
        states.row_mut(k + 1).tr_copy_from(&next);
    }

    let used_inputs = inputs.rows(0, len.saturating_sub(1)).into_owned();
    Trajectory::new(states, used_inputs, 0)
}

/// Evaluates the closed-form solution from a precomputed kernel:
/// `x[k] = G_k x[0] + sum_{j=0}^{k-1} G_{k-1-j} B u[j]`.
pub fn simulate_closed_form(
    kernel: &GKernel,
    x0: &DVector<f64>,
    inputs: &DMatrix<f64>,
    len: usize,
) -> Result<Trajectory> {
    let model = kernel.model();
    let n = model.n();
    if x0.len() != n {
        return Err(Error::Dimension(format!(
            "x0 has length {}, expected {n}",
            x0.len()
        )));
    }
    if len == 0 {
        return Err(Error::InvalidArgument(
            "simulation length must be at least 1".into(),
        ));
    }
    if len > kernel.horizon() {
        return Err(Error::HorizonExceeded {
            requested: len,
            available: kernel.horizon(),
        });
    }
    if inputs.ncols() != model.p() {
        return Err(Error::Dimension(format!(
            "inputs have {} columns, expected p = {}",
            inputs.ncols(),
            model.p()
        )));
    }
    if inputs.nrows() + 1 < len {
        return Err(Error::Dimension(format!(
            "evaluating {len} steps needs at least {} input rows, got {}",
            len - 1,
            inputs.nrows()
        )));
    }
    ensure_finite_vec("x0", x0)?;
    ensure_finite("inputs", inputs)?;

    // precompute B u[j] once per step
    let driven: Vec<DVector<f64>> = (0..len.saturating_sub(1))
        .map(|j| model.b() * inputs.row(j).transpose())
        .collect();

    let mut states = DMatrix::zeros(len, n);
    for k in 0..len {
        let mut xk = kernel.g(k) * x0;
        for (j, drive) in driven.iter().enumerate().take(k) {
            xk += kernel.g(k - 1 - j) * drive;
        }
        states.row_mut(k).tr_copy_from(&xk);
    }

    let used_inputs = inputs.rows(0, len.saturating_sub(1)).into_owned();
    Trajectory::new(states, used_inputs, 0)
}

/// Truncated fractional difference of a state matrix:
/// `z_i[k] = sum_{j=0}^{J-1} psi(alpha_i, j) x_i[k+1-j]`, with zero-padded
/// history before the window. Returns `(T-1) x n`.
pub fn fractional_difference(
    states: &DMatrix<f64>,
    orders: &FractionalOrders,
    truncation: usize,
) -> Result<DMatrix<f64>> {
    if truncation == 0 {
        return Err(Error::InvalidArgument(
            "fractional_difference: truncation J must be at least 1".into(),
        ));
    }
    let n = orders.len();
    if states.ncols() != n {
        return Err(Error::Dimension(format!(
            "states have {} columns, expected n = {n}",
            states.ncols()
        )));
    }
    let t = states.nrows();
    if t < 2 {
        return Err(Error::InvalidArgument(
            "fractional_difference needs at least 2 samples".into(),
        ));
    }
    let psi = psi_table(orders, truncation)?;
    let mut z = DMatrix::zeros(t - 1, n);
    for k in 0..t - 1 {
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..truncation {
                let idx = (k + 1) as isize - j as isize;
                if idx < 0 {
                    break; // zero-padded history contributes nothing
                }
                acc += psi.value(i, j) * states[(idx as usize, i)];
            }
            z[(k, i)] = acc;
        }
    }
    Ok(z)
}
