use std::sync::Arc;

use serde::Serialize;

use super::step::{solve_step, StepProblem};
use super::EngineError;
use crate::model::{probe_perturbation_control, probe_power_control, GradientSystem, SampleSet};
use crate::solver::SolverSettings;
use crate::vecops::norm_inf;

/// Constants of the a-priori energy bound: `C` from power control, `β` and
/// `c` from perturbation control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GronwallConstants {
    pub c_power: f64,
    pub beta: f64,
    pub c_pert: f64,
}

#[derive(Debug, Clone)]
pub struct SchemeOptions {
    pub solver: SolverSettings,
    /// Probed from `probe_samples` seeded samples when `None`.
    pub constants: Option<GronwallConstants>,
    pub probe_samples: usize,
    pub seed: u64,
    pub blowup_factor: f64,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        SchemeOptions {
            solver: SolverSettings::default(),
            constants: None,
            probe_samples: 64,
            seed: 2024,
            blowup_factor: 10.0,
        }
    }
}

/// Probe `C` and `β` (with `c = ½`) on seeded samples around `u0`.
pub fn probe_gronwall_constants(
    sys: &dyn GradientSystem,
    u0: &[f64],
    t0: f64,
    horizon: f64,
    samples: usize,
    seed: u64,
) -> Result<GronwallConstants, EngineError> {
    let radius = 2.0 * (1.0 + norm_inf(u0));
    let mut set = SampleSet::random(sys.dim(), samples, horizon, radius, seed);
    for s in &mut set.samples {
        s.t += t0;
    }
    let pc = probe_power_control(sys, &set)?;
    let pb = probe_perturbation_control(sys, 0.5, &set)?;
    Ok(GronwallConstants {
        c_power: pc.constant("C").unwrap_or(0.0),
        beta: pb.constant("beta").unwrap_or(0.0),
        c_pert: 0.5,
    })
}

/// Discrete solution of the semi-implicit scheme on an equidistant grid.
#[derive(Clone)]
pub struct Trajectory {
    pub system: Arc<dyn GradientSystem>,
    pub tau: f64,
    pub times: Vec<f64>,
    /// `U^0, ..., U^N`.
    pub nodes: Vec<Vec<f64>>,
    /// `ξ^n ∈ ∂E_{t_n}(U^n)` from the sum rule; `ξ^0 = ∇E_{t_0}(U^0)` when available.
    pub duals: Vec<Vec<f64>>,
    /// `w_n = B(t_{n-1}, U^{n-1})` for `n = 1..N` (index `n-1`).
    pub applied: Vec<Vec<f64>>,
    pub energies: Vec<f64>,
    pub envelope: Vec<f64>,
    pub iters: Vec<usize>,
    pub solver: SolverSettings,
    pub constants: GronwallConstants,
}

impl std::fmt::Debug for Trajectory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Trajectory")
            .field("system", &self.system.name())
            .field("tau", &self.tau)
            .field("steps", &self.steps())
            .finish()
    }
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.steps()]
    }

    /// Interval index `n` with `s ∈ (t_{n-1}, t_n]`; `s = t_0` maps to 1.
    pub fn interval_of(&self, s: f64) -> Result<usize, EngineError> {
        let n = self.steps();
        if s < self.t0() - 1e-12 * self.tau || s > self.horizon() + 1e-12 * self.tau {
            return Err(EngineError::OutOfRange(s));
        }
        let k = ((s - self.t0()) / self.tau).ceil() as usize;
        Ok(k.clamp(1, n))
    }

    /// Node index `n` whose time equals `s` up to roundoff.
    pub fn node_index(&self, s: f64) -> Option<usize> {
        let k = ((s - self.t0()) / self.tau).round();
        if k < 0.0 || k as usize > self.steps() {
            return None;
        }
        let k = k as usize;
        ((self.times[k] - s).abs() <= 1e-12 * (1.0 + s.abs())).then_some(k)
    }

    /// Constant-right interpolant `Ū_τ(s) = U^n` for `s ∈ (t_{n-1}, t_n]`.
    pub fn right(&self, s: f64) -> Result<&[f64], EngineError> {
        if let Some(k) = self.node_index(s) {
            return Ok(&self.nodes[k]);
        }
        Ok(&self.nodes[self.interval_of(s)?])
    }

    /// Constant-left interpolant `U̲_τ(s) = U^{n-1}` for `s ∈ [t_{n-1}, t_n)`.
    pub fn left(&self, s: f64) -> Result<&[f64], EngineError> {
        if let Some(k) = self.node_index(s) {
            return Ok(&self.nodes[k]);
        }
        Ok(&self.nodes[self.interval_of(s)? - 1])
    }

    /// Piecewise-affine interpolant `Û_τ(s)`.
    pub fn affine(&self, s: f64) -> Result<Vec<f64>, EngineError> {
        if let Some(k) = self.node_index(s) {
            return Ok(self.nodes[k].clone());
        }
        let n = self.interval_of(s)?;
        let lam = (s - self.times[n - 1]) / self.tau;
        Ok(self.nodes[n - 1]
            .iter()
            .zip(&self.nodes[n])
            .map(|(a, b)| (1.0 - lam) * a + lam * b)
            .collect())
    }

    /// `V^n = (U^n - U^{n-1})/τ`, the derivative of `Û_τ` on interval `n`.
    pub fn velocity(&self, n: usize) -> Vec<f64> {
        self.nodes[n]
            .iter()
            .zip(&self.nodes[n - 1])
            .map(|(a, b)| (a - b) / self.tau)
            .collect()
    }
}

/// Run the semi-implicit scheme `U^n ∈ argmin Φ(τ, t_{n-1}, U^{n-1}, B(t_{n-1},U^{n-1}); ·)`
/// with `τ = horizon / steps`.
pub fn run_scheme(
    sys: Arc<dyn GradientSystem>,
    u0: &[f64],
    t0: f64,
    horizon: f64,
    steps: usize,
    opts: &SchemeOptions,
) -> Result<Trajectory, EngineError> {
    if u0.len() != sys.dim() {
        return Err(EngineError::DimensionMismatch {
            expected: sys.dim(),
            got: u0.len(),
        });
    }
    if steps < 1 || !(horizon > 0.0) || !(t0 >= 0.0) {
        return Err(EngineError::InvalidStep(format!(
            "need steps >= 1, horizon > 0, t0 >= 0 (got {steps}, {horizon}, {t0})"
        )));
    }
    if !sys.in_domain(u0) {
        return Err(EngineError::InvalidStep("initial state outside the energy domain".into()));
    }
    let e0 = sys.energy(t0, u0);
    if !e0.is_finite() {
        return Err(EngineError::InvalidStep("initial energy is not finite".into()));
    }
    let constants = match opts.constants {
        Some(c) => c,
        None => probe_gronwall_constants(sys.as_ref(), u0, t0, horizon, opts.probe_samples, opts.seed)?,
    };
    let c1 = (constants.c_power * horizon).exp();
    let growth = 2.0 * constants.beta + constants.c_power * c1;
    let base = c1 * (e0.max(0.0) + 2.0 * horizon * constants.beta);

    let tau = horizon / steps as f64;
    let times: Vec<f64> = (0..=steps).map(|n| t0 + n as f64 * tau).collect();
    let mut nodes = vec![u0.to_vec()];
    let mut duals = vec![sys.energy_grad(t0, u0).unwrap_or_else(|| vec![0.0; u0.len()])];
    let mut applied = Vec::with_capacity(steps);
    let mut energies = vec![e0];
    let mut envelope = vec![base];
    let mut iters = Vec::with_capacity(steps);

    for n in 1..=steps {
        let prev = &nodes[n - 1];
        let w = sys.perturbation(times[n - 1], prev);
        let p = StepProblem::new(sys.as_ref(), tau, times[n - 1], prev, &w);
        let sol = solve_step(&p, &opts.solver)?;
        let e = sys.energy(times[n], &sol.next);
        let m = base * (c1 * growth * (times[n] - t0)).exp();
        if e > opts.blowup_factor * m + 1e-12 * (1.0 + e.abs()) {
            return Err(EngineError::EnergyBlowup {
                step: n,
                energy: e,
                envelope: m,
            });
        }
        energies.push(e);
        envelope.push(m);
        iters.push(sol.iters);
        duals.push(sol.xi);
        nodes.push(sol.next);
        applied.push(w);
    }

    Ok(Trajectory {
        system: sys,
        tau,
        times,
        nodes,
        duals,
        applied,
        energies,
        envelope,
        iters,
        solver: opts.solver,
        constants,
    })
}
