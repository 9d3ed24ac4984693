//! Perfect observability: stacked observation matrices, the rank
//! set-function over dedicated sensor sets, and greedy / exhaustive sensor
//! selection.
//!
//! For a sensor set `S` (rows of the identity) and horizon `K`, the stacked
//! observation equation is `Y = Theta x[0] + Xi U` with
//!
//! ```text
//! Theta = [ (C G_0)^T (C G_1)^T ... (C G_{K-1})^T ]^T
//! Xi    = block lower shift: block (r, c) = C G_{r-1-c} B for r > c, else 0
//! ```
//!
//! The system is perfectly observable iff
//! `rank([Theta Xi]) = n + (K-1) p`, and `f(S) = rank([Theta Xi] | C = I^S)`
//! is a monotone submodular set function, which is what makes greedy
//! selection well behaved.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fraccore::{g_kernel, SystemModel};
use crate::numerics::{numerical_rank, RankReport};

/// Refuse exhaustive subset enumeration above this many states by default.
pub const DEFAULT_EXHAUSTIVE_LIMIT: usize = 10;

/// A set of dedicated sensors: state indices (0-based) whose rows of the
/// identity form the observation matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensorSet {
    indices: Vec<usize>,
    achieved_rank: Option<usize>,
}

impl SensorSet {
    /// Builds a set from indices, deduplicating and sorting them.
    pub fn new(mut indices: Vec<usize>, n: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::SensorOutOfRange { index: bad, n });
        }
        Ok(SensorSet {
            indices,
            achieved_rank: None,
        })
    }

    pub fn empty() -> Self {
        SensorSet {
            indices: Vec::new(),
            achieved_rank: None,
        }
    }

    pub fn full(n: usize) -> Self {
        SensorSet {
            indices: (0..n).collect(),
            achieved_rank: None,
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    /// The rank `f(S)` recorded when this set was last evaluated.
    pub fn achieved_rank(&self) -> Option<usize> {
        self.achieved_rank
    }

    pub fn with_achieved_rank(mut self, rank: usize) -> Self {
        self.achieved_rank = Some(rank);
        self
    }
}

/// The stacked pair for one sensor set and horizon.
#[derive(Debug, Clone)]
pub struct ObservabilityPair {
    theta: DMatrix<f64>,
    xi: DMatrix<f64>,
    horizon: usize,
    sensors: SensorSet,
}

impl ObservabilityPair {
    pub fn theta(&self) -> &DMatrix<f64> {
        &self.theta
    }

    pub fn xi(&self) -> &DMatrix<f64> {
        &self.xi
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn sensors(&self) -> &SensorSet {
        &self.sensors
    }

    /// Horizontal concatenation `[Theta Xi]`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let rows = self.theta.nrows();
        let mut m = DMatrix::zeros(rows, self.theta.ncols() + self.xi.ncols());
        m.columns_mut(0, self.theta.ncols()).copy_from(&self.theta);
        m.columns_mut(self.theta.ncols(), self.xi.ncols())
            .copy_from(&self.xi);
        m
    }
}

/// Result of a greedy sensor selection run.
#[derive(Debug, Clone)]
pub struct SelectionResult {
    /// Selected sensors (sorted), with the achieved rank recorded.
    pub selected: SensorSet,
    /// The perfect-observability target `n + (K-1) p`.
    pub rank_target: usize,
    /// Selection order: `(sensor, marginal rank gain)` per round.
    pub marginal_history: Vec<(usize, usize)>,
    /// Whether the achieved rank met the target.
    pub feasible: bool,
}

/// Precomputed full-sensor stack, from which any sensor set's `[Theta Xi]`
/// is a row selection. Build once per `(model, K)` when evaluating many
/// sets; the one-shot helpers below wrap it.
#[derive(Debug, Clone)]
pub struct ThetaXiStack {
    full_theta: DMatrix<f64>,
    full_xi: DMatrix<f64>,
    n: usize,
    p: usize,
    horizon: usize,
}

impl ThetaXiStack {
    pub fn new(model: &SystemModel, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidArgument(
                "observability horizon K must be at least 1".into(),
            ));
        }
        let n = model.n();
        let p = model.p();
        let kernel = g_kernel(model, horizon)?;

        let mut full_theta = DMatrix::zeros(horizon * n, n);
        for k in 0..horizon {
            full_theta.rows_mut(k * n, n).copy_from(kernel.g(k));
        }

        // block (r, c) of Xi is G_{r-1-c} B below the diagonal, zero
        // elsewhere; the last block column is structurally zero
        let gb: Vec<DMatrix<f64>> = (0..horizon.saturating_sub(1))
            .map(|k| kernel.g(k) * model.b())
            .collect();
        let mut full_xi = DMatrix::zeros(horizon * n, horizon * p);
        for r in 1..horizon {
            for c in 0..r {
                full_xi
                    .view_mut((r * n, c * p), (n, p))
                    .copy_from(&gb[r - 1 - c]);
            }
        }

        Ok(ThetaXiStack {
            full_theta,
            full_xi,
            n,
            p,
            horizon,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// The perfect-observability rank target `n + (K-1) p`.
    pub fn target_rank(&self) -> usize {
        self.n + (self.horizon - 1) * self.p
    }

    fn check(&self, sensors: &SensorSet) -> Result<()> {
        if let Some(&bad) = sensors.indices().iter().find(|&&s| s >= self.n) {
            return Err(Error::SensorOutOfRange {
                index: bad,
                n: self.n,
            });
        }
        Ok(())
    }

    fn select_rows(&self, source: &DMatrix<f64>, sensors: &SensorSet) -> DMatrix<f64> {
        let rows: Vec<usize> = (0..self.horizon)
            .flat_map(|k| sensors.indices().iter().map(move |&s| k * self.n + s))
            .collect();
        source.select_rows(rows.iter())
    }

    /// The `(Theta, Xi)` pair for one sensor set.
    pub fn pair(&self, sensors: &SensorSet) -> Result<ObservabilityPair> {
        self.check(sensors)?;
        Ok(ObservabilityPair {
            theta: self.select_rows(&self.full_theta, sensors),
            xi: self.select_rows(&self.full_xi, sensors),
            horizon: self.horizon,
            sensors: sensors.clone(),
        })
    }

    /// Rank report of `[Theta Xi]` for one sensor set; the empty set has
    /// rank 0 by convention.
    pub fn rank_report(&self, sensors: &SensorSet) -> Result<RankReport> {
        self.check(sensors)?;
        if sensors.is_empty() {
            return Ok(RankReport {
                rank: 0,
                singular_values: Vec::new(),
                tolerance_used: 0.0,
            });
        }
        numerical_rank(&self.pair(sensors)?.stacked(), None)
    }

    /// The set function `f(S) = rank([Theta Xi] | C = I^S)`.
    pub fn rank(&self, sensors: &SensorSet) -> Result<usize> {
        Ok(self.rank_report(sensors)?.rank)
    }
}

/// Builds `(Theta, Xi)` for one sensor set and horizon.
pub fn build_theta_xi(
    model: &SystemModel,
    sensors: &SensorSet,
    horizon: usize,
) -> Result<ObservabilityPair> {
    ThetaXiStack::new(model, horizon)?.pair(sensors)
}

/// Evaluates `f(S)` once. Prefer [`ThetaXiStack`] for repeated queries.
pub fn rank_f(model: &SystemModel, sensors: &SensorSet, horizon: usize) -> Result<usize> {
    ThetaXiStack::new(model, horizon)?.rank(sensors)
}

/// Tests the perfect-observability rank condition
/// `rank([Theta Xi]) = n + (K-1) p` and returns the evidence.
pub fn is_perfectly_observable(
    model: &SystemModel,
    sensors: &SensorSet,
    horizon: usize,
) -> Result<(bool, RankReport)> {
    let stack = ThetaXiStack::new(model, horizon)?;
    let report = stack.rank_report(sensors)?;
    Ok((report.rank == stack.target_rank(), report))
}

/// Greedy sensor selection: repeatedly add the sensor with the largest
/// marginal rank gain (ties broken by lowest index) until the target rank is
/// met or no sensor helps.
///
/// Infeasibility (`f([n]) < target`) is a reported state, not an error; the
/// best-found set is still returned.
pub fn greedy_select(model: &SystemModel, horizon: usize) -> Result<SelectionResult> {
    let stack = ThetaXiStack::new(model, horizon)?;
    let n = stack.n();
    let target = stack.target_rank();
    let full_rank = stack.rank(&SensorSet::full(n))?;

    let mut chosen: Vec<usize> = Vec::new();
    let mut current_rank = 0usize;
    let mut history = Vec::new();

    while current_rank < target && chosen.len() < n {
        let mut best: Option<(usize, usize)> = None; // (gain, sensor)
        for s in 0..n {
            if chosen.contains(&s) {
                continue;
            }
            let mut candidate = chosen.clone();
            candidate.push(s);
            let rank = stack.rank(&SensorSet::new(candidate, n)?)?;
            let gain = rank.saturating_sub(current_rank);
            // strict comparison keeps the lowest index on ties
            if best.is_none_or(|(bg, _)| gain > bg) {
                best = Some((gain, s));
            }
        }
        let (gain, sensor) = best.expect("candidate set is nonempty");
        if gain == 0 {
            break; // no sensor helps; f([n]) has been reached
        }
        chosen.push(sensor);
        current_rank += gain;
        history.push((sensor, gain));
    }

    debug_assert!(current_rank <= full_rank);
    let selected = SensorSet::new(chosen, n)?.with_achieved_rank(current_rank);
    Ok(SelectionResult {
        selected,
        rank_target: target,
        marginal_history: history,
        feasible: current_rank == target,
    })
}

/// Smallest sensor set meeting the rank target, by increasing-cardinality
/// subset enumeration; the lexicographically smallest among minima.
/// `Ok(None)` means no subset (not even the full set) reaches the target.
pub fn exhaustive_min_sensors(
    model: &SystemModel,
    horizon: usize,
    n_limit: usize,
) -> Result<Option<SensorSet>> {
    let n = model.n();
    if n > n_limit {
        return Err(Error::ExhaustiveLimit { n, limit: n_limit });
    }
    let stack = ThetaXiStack::new(model, horizon)?;
    let target = stack.target_rank();
    if stack.rank(&SensorSet::full(n))? < target {
        return Ok(None);
    }
    for size in 1..=n {
        let mut subset: Vec<usize> = (0..size).collect();
        loop {
            let candidate = SensorSet::new(subset.clone(), n)?;
            let rank = stack.rank(&candidate)?;
            if rank == target {
                return Ok(Some(candidate.with_achieved_rank(rank)));
            }
            if !next_combination(&mut subset, n) {
                break;
            }
        }
    }
    Ok(None)
}

/// Advances `subset` to the next k-combination of `0..n` in lexicographic
/// order. Returns false when exhausted.
fn next_combination(subset: &mut [usize], n: usize) -> bool {
    let k = subset.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if subset[i] < n - (k - i) {
            subset[i] += 1;
            for j in i + 1..k {
                subset[j] = subset[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
