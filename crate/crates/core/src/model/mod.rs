//! Perturbed gradient systems `(V, E, Ψ, B)` as oracle bundles, a catalog of
//! shipped systems, and sampled probes of the standing assumptions.

mod catalog;
mod probes;
mod systems;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::convex::{ConvexError, Functional};
use crate::vecops::norm;

pub use catalog::{build_system, catalog_names, CATALOG};
pub use probes::{
    probe_conjugate_consistency, probe_dissipation_potential, probe_energy_coercivity, probe_mosco_liminf,
    probe_perturbation_control, probe_power_control, probe_superlinearity, run_standard_probes,
    AssumptionReport, MoscoCase, OVERFLOW_THRESHOLD,
};
pub use systems::{Forcing, LinearSystem, StateDependentScalar, StickSlip};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("energy {value:e} <= 0 at t = {t}; shift the energy by a positive constant")]
    NonpositiveEnergy { t: f64, value: f64 },
    #[error("dissipation conjugate {value:e} exceeds the overflow threshold")]
    ConjugateOverflow { value: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown system '{name}'; catalog: {}", known.join(", "))]
    UnknownSystem { name: String, known: Vec<String> },
    #[error(transparent)]
    Convex(#[from] ConvexError),
}

/// Oracle bundle for `B(t,u) ∈ ∂Ψ_u(u') + ∂E_t(u)`.
///
/// Covectors use the same coordinates as states; `dissipation_conj` is the
/// conjugate with respect to the Euclidean pairing `<ξ, v> = Σ ξ_i v_i`.
pub trait GradientSystem: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;

    fn energy(&self, t: f64, u: &[f64]) -> f64;
    /// `∂_t E_t(u)`.
    fn power(&self, t: f64, u: &[f64]) -> f64;
    fn energy_grad(&self, _t: f64, _u: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// `Ψ_u(v)` for base state `u`.
    fn dissipation(&self, base: &[f64], v: &[f64]) -> f64;
    fn dissipation_grad(&self, _base: &[f64], _v: &[f64]) -> Option<Vec<f64>> {
        None
    }
    fn dissipation_conj(&self, base: &[f64], xi: &[f64]) -> f64;
    /// Diagonal `m` with `Ψ_u(v) = ½ Σ m_i v_i²`, when the dissipation is of
    /// that form.
    fn dissipation_diag(&self, _base: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn perturbation(&self, t: f64, u: &[f64]) -> Vec<f64>;

    fn in_domain(&self, _u: &[f64]) -> bool {
        true
    }
    /// `E_t` does not depend on `t` (so `power` vanishes).
    fn is_autonomous(&self) -> bool;

    /// Exact minimizer of `v ↦ rΨ_u((v-u)/r) + E_{t+r}(v) - <w,v>` for systems
    /// where the step has a registered proximal form.
    fn closed_form_step(&self, _r: f64, _t: f64, _u: &[f64], _w: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// Norm used for trajectory distances.
    fn state_norm(&self, v: &[f64]) -> f64 {
        norm(v)
    }
}

/// `Ψ_u` as a convex functional, with its closed-form conjugate attached.
pub fn dissipation_functional(sys: Arc<dyn GradientSystem>, base: Vec<f64>) -> Functional {
    let n = sys.dim();
    let (s1, s2, s3) = (sys.clone(), sys.clone(), sys);
    let (b1, b2, b3) = (base.clone(), base.clone(), base);
    let mut f = Functional::new(n, move |v| s1.dissipation(&b1, v))
        .with_conjugate(move |xi| s2.dissipation_conj(&b2, xi))
        .convex(true);
    if s3.dissipation_grad(&b3, &vec![0.0; n]).is_some() {
        f = f.with_grad(move |v| s3.dissipation_grad(&b3, v).unwrap());
    }
    f
}

/// `Ψ*_u` as a convex functional (conjugate slot holds `Ψ_u`).
pub fn dissipation_conj_functional(sys: Arc<dyn GradientSystem>, base: Vec<f64>) -> Functional {
    dissipation_functional(sys, base)
        .closed_form_conjugate()
        .expect("dissipation functional always carries its conjugate")
}

/// `E_t` as a functional.
pub fn energy_functional(sys: Arc<dyn GradientSystem>, t: f64) -> Functional {
    let n = sys.dim();
    let (s1, s2, s3) = (sys.clone(), sys.clone(), sys);
    let mut f = Functional::new(n, move |u| s1.energy(t, u))
        .with_domain(move |u| s2.in_domain(u))
        .convex(true);
    if s3.energy_grad(t, &vec![0.0; n]).is_some() {
        f = f.with_grad(move |u| s3.energy_grad(t, u).unwrap());
    }
    f
}

/// One probe sample: a time, a state and a velocity/covector direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// Seeded random samples with `t ∈ [0, horizon]`, states and directions
/// uniform in `[-radius, radius]^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub samples: Vec<Sample>,
    pub horizon: f64,
}

impl SampleSet {
    pub fn random(dim: usize, count: usize, horizon: f64, radius: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..count)
            .map(|_| Sample {
                t: rng.gen_range(0.0..=horizon),
                u: (0..dim).map(|_| rng.gen_range(-radius..=radius)).collect(),
                v: (0..dim).map(|_| rng.gen_range(-radius..=radius)).collect(),
            })
            .collect();
        SampleSet { samples, horizon }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}
