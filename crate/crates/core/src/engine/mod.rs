//! Time discretization: the step functional, the semi-implicit scheme, the
//! interpolants of a discrete trajectory, Moreau-Yosida diagnostics and the
//! energy-dissipation evaluators.

mod edb;
mod interp;
mod moreau;
mod scheme;
mod step;

use thiserror::Error;

use crate::convex::ConvexError;
use crate::model::ModelError;
use crate::solver::SolverError;

pub use edb::{edb_report, EdbOptions, EdbReport, IntervalReport};
pub use interp::de_giorgi_interpolant;
pub use moreau::{moreau_yosida_scan, MoreauOptions, MoreauRow, MoreauTable};
pub use scheme::{probe_gronwall_constants, run_scheme, GronwallConstants, SchemeOptions, Trajectory};
pub use step::{solve_step, step_functional, StepProblem, StepSolution};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid step problem: {0}")]
    InvalidStep(String),
    #[error("sum rule violated: Fenchel-Young gap {fy_gap:e} (tol {fy_tol:e}), energy residual {e_residual:e} (tol {e_tol:e})")]
    SumRuleViolated {
        fy_gap: f64,
        fy_tol: f64,
        e_residual: f64,
        e_tol: f64,
    },
    #[error("energy {energy:e} at step {step} exceeds 10x the Gronwall envelope {envelope:e}")]
    EnergyBlowup { step: usize, energy: f64, envelope: f64 },
    #[error("quadrature under-resolved on interval {interval}: doubling substeps changed an integral by {change:e} (tol {tol:e})")]
    QuadratureUnderResolved { interval: usize, change: f64, tol: f64 },
    #[error("time {0} outside the trajectory")]
    OutOfRange(f64),
    #[error("system provides neither a dissipation gradient nor an energy gradient for the dual selection")]
    NoDualSelection,
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Convex(#[from] ConvexError),
}
