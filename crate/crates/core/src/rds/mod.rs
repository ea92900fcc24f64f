//! Vertex-centered finite differences for the quasilinear reaction-diffusion
//! system `B^ε(t,x,u) ∈ A^ε(x,u) u' - div ∂_{∇u}F^ε + ∂_u F^ε` on the unit
//! interval with zero-flux boundary conditions and ε-periodic coefficients.

mod coefficients;
mod system;

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::model::GradientSystem;

pub use coefficients::{
    check_relations, probe_coercivity, probe_ellipticity, probe_periodicity, Oscillation, ScalarCoefficients,
};
pub use system::{assemble_system, energy_grad_check, RdsSystem};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RdsError {
    #[error("ellipticity violated: {0}")]
    EllipticityViolated(String),
    #[error("coercivity violated: {0}")]
    CoercivityViolated(String),
    #[error("coefficient relations violated: {0}")]
    RelationsViolated(String),
    #[error("invalid grid or scale: {0}")]
    InvalidParameter(String),
}

/// Uniform vertex grid on `[0, 1]` with `cells` cells and `cells + 1` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid {
    pub cells: usize,
    pub h: f64,
}

impl Grid {
    pub fn new(cells: usize) -> Result<Self, RdsError> {
        if cells < 2 {
            return Err(RdsError::InvalidParameter(format!("need at least 2 cells, got {cells}")));
        }
        Ok(Grid {
            cells,
            h: 1.0 / cells as f64,
        })
    }

    pub fn nodes(&self) -> usize {
        self.cells + 1
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    pub fn midpoint(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.h
    }

    /// Trapezoid (lumped mass) weight of node `i`.
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.cells {
            0.5 * self.h
        } else {
            self.h
        }
    }

    /// Samples `f` at the nodes.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.nodes()).map(|i| f(self.node(i))).collect()
    }
}

/// Growth exponents and constants of the coefficient bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Growth {
    pub p: f64,
    pub q: f64,
    pub r: f64,
    /// Coercivity constant; `None` skips the coercivity probe.
    pub c_f: Option<f64>,
    pub c_a: f64,
    pub c_b: f64,
}

/// Which coefficient oracles vary with the cell variable `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct YDependence {
    pub dissipation: bool,
    pub energy: bool,
    pub forcing: bool,
}

impl YDependence {
    pub fn any(&self) -> bool {
        self.dissipation || self.energy || self.forcing
    }
}

/// 1-periodic cell coefficients `𝔸(y,u)`, `𝔽(y,u,U)`, `𝔹(y,t,u)` for `I`
/// components in one space dimension (`U ∈ R^I`).
pub trait CellCoefficients: Send + Sync {
    fn components(&self) -> usize;
    fn dissipation_tensor(&self, y: f64, u: &[f64]) -> DMatrix<f64>;
    fn energy_density(&self, y: f64, u: &[f64], grad: &[f64]) -> f64;
    /// `(∂_u 𝔽, ∂_U 𝔽)`.
    fn energy_density_grad(&self, y: f64, u: &[f64], grad: &[f64]) -> (Vec<f64>, Vec<f64>);
    fn forcing(&self, y: f64, t: f64, u: &[f64]) -> Vec<f64>;
    fn growth(&self) -> Growth;
    fn y_dependence(&self) -> YDependence;
    fn dissipation_depends_on_state(&self) -> bool;
    fn forcing_depends_on_time(&self) -> bool;
    /// For `I = 1` densities of the form `𝔽 = f0(u) + ½k(y)U²`: `(k(y), f0(u))`.
    fn quadratic_in_gradient(&self, _y: f64, _u: &[f64]) -> Option<(f64, f64)> {
        None
    }
    /// Effective domain of `(u, U) ↦ 𝔽`; `energy_density` is `+inf` outside.
    fn in_domain(&self, _u: &[f64], _grad: &[f64]) -> bool {
        true
    }
}

/// Names of the shipped coefficient families.
pub const COEFFICIENT_INSTANCES: &[&str] = &["heat", "osc-diffusion", "osc-dissipation", "default", "state-dependent"];

pub fn coefficient_instance(name: &str) -> Option<ScalarCoefficients> {
    Some(match name {
        "heat" => ScalarCoefficients::heat(),
        "osc-diffusion" => ScalarCoefficients::oscillatory_diffusion(),
        "osc-dissipation" => ScalarCoefficients::oscillatory_dissipation(),
        "default" => ScalarCoefficients::default_instance(),
        "state-dependent" => ScalarCoefficients::state_dependent(),
        _ => return None,
    })
}

/// Reaction-diffusion entries of the system catalog: `rds-<family>`.
pub fn catalog_instance(name: &str) -> Option<Arc<dyn GradientSystem>> {
    let family = name.strip_prefix("rds-")?;
    let coeffs = coefficient_instance(family)?;
    let (eps, cells) = if family == "heat" { (1.0, 32) } else { (0.25, 64) };
    let grid = Grid::new(cells).ok()?;
    let sys = assemble_system(Arc::new(coeffs), eps, grid).ok()?;
    Some(Arc::new(sys.with_name(name)))
}
