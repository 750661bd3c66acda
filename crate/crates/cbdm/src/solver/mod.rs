//! Weight solvers for the three discrepancy classes.
//!
//! All solvers share [`SolverConfig`] and return a validated
//! [`crate::data::WeightSolution`]. The feasible set is always the capped
//! simplex `{w >= 0, sum w = 1, w_i <= cap/n}`.

mod dual;
mod finite;
mod mmd;
mod projection;
mod qp;
mod wasserstein;

pub use dual::{
    rho_star_eval, solve_dual, weights_from_dual, DualSolution, LegendrePair, RegularizerKind,
};
pub use finite::solve_finite_class;
pub use mmd::solve_mmd;
pub use projection::{project_capped_simplex, project_scaled_simplex};
pub use wasserstein::{solve_w1_nearest, solve_w1_transport, TRANSPORT_PLAN_ENTRY_LIMIT};

use crate::error::{Error, Result};

/// How the smooth solvers pick their step size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRule {
    /// 1/L with L estimated by a 50-iteration power method, doubled on the
    /// rare non-descent step.
    FixedLipschitz,
    /// Start from a cheap trace-based bound and rely on adaptive doubling.
    Backtracking,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Regularization strength on the weights (lambda >= 0).
    pub lambda: f64,
    /// Clipping level W >= 1; individual weights stay at or below W/n.
    pub cap: f64,
    pub max_iterations: usize,
    /// Relative objective-decrease threshold for convergence.
    pub objective_tolerance: f64,
    pub step_rule: StepRule,
    /// Seed for solver-internal randomization (restart studies); the
    /// default paths are deterministic and ignore it.
    pub seed: u64,
    /// Record the objective at every iteration in the solution's trace.
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda: 0.0,
            cap: 5.0,
            max_iterations: 20_000,
            objective_tolerance: 1e-13,
            step_rule: StepRule::FixedLipschitz,
            seed: 0,
            record_trace: false,
        }
    }
}

impl SolverConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(Error::NegativeLambda(self.lambda));
        }
        if !(self.cap >= 1.0) {
            return Err(Error::CapBelowOne(self.cap));
        }
        Ok(())
    }
}
