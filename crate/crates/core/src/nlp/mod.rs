//! Sparse nonlinear programming with an augmented Lagrangian method.
//!
//! Problems have the form `min f(z)` subject to `c(z) = 0`, `g(z) >= 0` and
//! `lo <= z <= hi`. The outer loop updates multipliers and the penalty; the
//! inner loop is a projected L-BFGS whose initial Hessian is a sparse
//! Gauss-Newton model of the augmented Lagrangian, factorized in envelope
//! storage so each iteration scales linearly with the horizon length.

mod al;
pub mod envelope;
mod kkt;
mod sparse;

use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use al::solve;
pub use kkt::{kkt_audit, KktReport};
pub use sparse::SparseMatrix;

/// A smooth constrained problem.
///
/// Residuals are laid out with the `num_eq` equality rows first, followed by
/// the `num_ineq` inequality rows. The sparsity structure of the Jacobian
/// should not depend on `z`.
pub trait Nlp {
    fn num_vars(&self) -> usize;
    fn num_eq(&self) -> usize;
    fn num_ineq(&self) -> usize;
    fn lower_bounds(&self) -> &[f64];
    fn upper_bounds(&self) -> &[f64];

    fn cost(&self, z: &[f64]) -> f64;

    /// Writes `∇f(z)` into `grad` and returns `f(z)`.
    fn cost_and_gradient(&self, z: &[f64], grad: &mut [f64]) -> f64;

    fn constraints(&self, z: &[f64], out: &mut [f64]);

    /// Writes residuals into `out` and refills `jac` (rows × vars).
    fn constraints_and_jacobian(&self, z: &[f64], out: &mut [f64], jac: &mut SparseMatrix);

    /// Positive semidefinite approximation of the cost Hessian as lower
    /// triangular triplets `(row >= col)`. Returns `false` if unavailable.
    fn cost_hessian_approx(&self, _z: &[f64], _out: &mut Vec<(usize, usize, f64)>) -> bool {
        false
    }

    fn num_constraints(&self) -> usize {
        self.num_eq() + self.num_ineq()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxTime,
    MaxIter,
    InfeasibleDetected,
    NumericFailure,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Converged => "converged",
            Self::MaxTime => "max_time",
            Self::MaxIter => "max_iter",
            Self::InfeasibleDetected => "infeasible_detected",
            Self::NumericFailure => "numeric_failure",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Wall-clock cap; `None` makes the solve fully deterministic.
    pub max_wall_time: Option<Duration>,
    /// Cap on outer (multiplier update) iterations.
    pub max_iterations: usize,
    /// Cap on inner iterations per outer iteration.
    pub max_inner_iterations: usize,
    /// Largest allowed raw constraint violation.
    pub feasibility_tol: f64,
    /// Relative stationarity and complementarity tolerance.
    pub optimality_tol: f64,
    pub initial_guess: Vec<f64>,
    /// Multipliers in residual order (equalities then inequalities).
    pub initial_multipliers: Option<Vec<f64>>,
    pub initial_penalty: f64,
    pub max_penalty: f64,
    /// Alternative starting point tried once if the first attempt fails.
    pub recovery_guess: Option<Vec<f64>>,
    pub lbfgs_memory: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_wall_time: None,
            max_iterations: 40,
            max_inner_iterations: 300,
            feasibility_tol: 1e-4,
            optimality_tol: 1e-3,
            initial_guess: Vec::new(),
            initial_multipliers: None,
            initial_penalty: 10.0,
            max_penalty: 1e9,
            recovery_guess: None,
            lbfgs_memory: 8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub z: Vec<f64>,
    /// Multipliers in residual order, sign convention `L = f - λᵀc - μᵀg`.
    pub multipliers: Vec<f64>,
    pub cost: f64,
    /// Relative projected stationarity of the Lagrangian.
    pub stationarity: f64,
    /// `max |min(μ, g)|` over inequality rows.
    pub complementarity: f64,
    /// Largest raw violation of equalities and inequalities.
    pub constraint_violation: f64,
    /// Inner iterations summed over all outer iterations and attempts.
    pub iterations: usize,
    pub outer_iterations: usize,
    pub used_recovery: bool,
    pub wall_time: Duration,
}

impl SolveResult {
    pub fn kkt_residual(&self) -> f64 {
        self.stationarity.max(self.complementarity)
    }

    /// Result for a solve that never ran, e.g. when a failure is injected.
    pub fn failed(status: SolveStatus, z: Vec<f64>, num_constraints: usize) -> Self {
        Self {
            status,
            z,
            multipliers: vec![0.0; num_constraints],
            cost: f64::NAN,
            stationarity: f64::NAN,
            complementarity: f64::NAN,
            constraint_violation: f64::NAN,
            iterations: 0,
            outer_iterations: 0,
            used_recovery: false,
            wall_time: Duration::ZERO,
        }
    }
}
