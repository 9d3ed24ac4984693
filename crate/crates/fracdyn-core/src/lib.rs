//! Discrete-time fractional-order dynamical networks with unknown inputs.
//!
//! The crate covers four workflows over the system
//! `Delta^alpha x[k+1] = A x[k] + B u[k]` with dedicated (identity-row)
//! sensors:
//!
//! * [`fraccore`] — fractional-difference weights, the G-matrix kernel, and
//!   recursive / closed-form simulation;
//! * [`estimation`] — alternating (EM-style) estimation of `A` and the
//!   sparse unknown inputs from measured states, plus slope-based
//!   fractional-order estimation and prediction;
//! * [`observability`] — the perfect-observability rank test and greedy /
//!   exhaustive dedicated-sensor selection over the submodular rank
//!   set-function;
//! * [`recovery`] — recovery of the initial state and inputs from partial
//!   observations, jointly or via the input-projector + ridge route.
//!
//! [`numerics`] holds the shared rank / least-squares / ridge / lasso
//! primitives and all tolerance policy.

pub mod error;
pub mod estimation;
pub mod fraccore;
pub mod numerics;
pub mod observability;
pub mod recovery;

pub use error::{Error, Result};
pub use estimation::{
    estimate_alpha, run_em, AlphaEstimate, AlphaMap, EmConfig, EmEstimate, HaarSlopeEstimator,
    OrderEstimator,
};
pub use fraccore::{
    d_matrix, fractional_difference, g_kernel, psi_table, simulate_closed_form,
    simulate_recursive, FractionalOrders, GKernel, PsiTable, SystemModel, Trajectory,
};
pub use numerics::{lasso, least_squares, numerical_rank, ridge, LassoConfig, RankReport};
pub use observability::{
    build_theta_xi, exhaustive_min_sensors, greedy_select, is_perfectly_observable, rank_f,
    ObservabilityPair, SelectionResult, SensorSet, ThetaXiStack,
};
pub use recovery::{
    input_projector, recover_joint, recover_projected_ridge, InputRecovery, ObservationStack,
    RecoveryMethod, RecoveryResult,
};
