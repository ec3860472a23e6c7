//! Small dense conic solvers for the trained POVM and linear classifiers.

pub mod lp;
pub mod sdp;

pub use lp::{solve_box_gap_lp, GapLpSolution, LpOptions};
pub use sdp::{min_gap, solve_povm_sdp, Completeness, PovmSdpProblem, SdpObjective, SdpOptions};

/// Convergence summary returned by every solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverReport {
    pub objective_value: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub constraint_violation: f64,
    pub converged: bool,
}
