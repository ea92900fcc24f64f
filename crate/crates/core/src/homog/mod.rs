//! Effective models for ε-periodic coefficients: arithmetic and harmonic
//! means of the dissipation tensor, the averaged perturbation and the
//! cell-problem density `F_hom`.

mod cell;
mod effective;
mod means;
mod table;

use thiserror::Error;

use crate::rds::RdsError;
use crate::solver::SolverError;

pub use cell::{cell_closed_form, solve_cell_problem, CellOptions, CellProblem};
pub use effective::{
    build_effective_system, DissipationMode, EffectiveCoefficients, EffectiveOptions, EnergyMode,
};
pub use means::{mean_forcing, mean_tensors, MeanTensors};
pub use table::{FhomTable, TableSpec};

#[derive(Debug, Error)]
pub enum HomogError {
    #[error("dissipation tensor numerically singular at y = {y} (min eigenvalue {min_eigenvalue:e})")]
    SingularInverse { y: f64, min_eigenvalue: f64 },
    #[error("F_hom tabulation too coarse: grid-doubling error {estimate:e} exceeds {tol:e}")]
    TabulationGapTooCoarse { estimate: f64, tol: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Rds(#[from] RdsError),
}
