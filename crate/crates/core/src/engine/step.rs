use super::EngineError;
use crate::convex::gap_tolerance;
use crate::model::GradientSystem;
use crate::solver::{minimize, Objective, SolverSettings};
use crate::vecops::{dot, norm, sub};

/// `v ↦ Φ(r,t,u,w;v) = rΨ_u((v-u)/r) + E_{t+r}(v) - <w,v>`.
#[derive(Clone, Copy)]
pub struct StepProblem<'a> {
    pub system: &'a dyn GradientSystem,
    pub r: f64,
    pub t: f64,
    pub u: &'a [f64],
    pub w: &'a [f64],
}

impl<'a> StepProblem<'a> {
    pub fn new(system: &'a dyn GradientSystem, r: f64, t: f64, u: &'a [f64], w: &'a [f64]) -> Self {
        StepProblem { system, r, t, u, w }
    }

    fn validate(&self) -> Result<(), EngineError> {
        let n = self.system.dim();
        for len in [self.u.len(), self.w.len()] {
            if len != n {
                return Err(EngineError::DimensionMismatch { expected: n, got: len });
            }
        }
        if !(self.r > 0.0) || !self.r.is_finite() {
            return Err(EngineError::InvalidStep(format!("r = {} must be positive", self.r)));
        }
        if !(self.t >= 0.0) {
            return Err(EngineError::InvalidStep(format!("t = {} must be nonnegative", self.t)));
        }
        if !self.system.in_domain(self.u) {
            return Err(EngineError::InvalidStep("base state outside the energy domain".into()));
        }
        Ok(())
    }

    fn velocity(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(self.u).map(|(a, b)| (a - b) / self.r).collect()
    }

    fn value_unchecked(&self, v: &[f64]) -> f64 {
        if !self.system.in_domain(v) {
            return f64::INFINITY;
        }
        let vh = self.velocity(v);
        self.r * self.system.dissipation(self.u, &vh) + self.system.energy(self.t + self.r, v) - dot(self.w, v)
    }

    fn gradient_unchecked(&self, v: &[f64]) -> Option<Vec<f64>> {
        let vh = self.velocity(v);
        let dp = self.system.dissipation_grad(self.u, &vh)?;
        let de = self.system.energy_grad(self.t + self.r, v)?;
        Some(dp.iter().zip(&de).zip(self.w).map(|((a, b), c)| a + b - c).collect())
    }
}

/// Value of the step functional; `+inf` outside the energy domain.
pub fn step_functional(p: &StepProblem<'_>, v: &[f64]) -> Result<f64, EngineError> {
    let n = p.system.dim();
    for len in [v.len(), p.u.len(), p.w.len()] {
        if len != n {
            return Err(EngineError::DimensionMismatch { expected: n, got: len });
        }
    }
    Ok(p.value_unchecked(v))
}

/// `x ↦ Φ(u + r x)/r` in velocity coordinates. The Hessian `∇²Ψ + r∇²E`
/// stays bounded as `r -> 0`, and the gradient equals `∇_vΦ(u + r x)`.
struct StepObjective<'a, 'b> {
    p: &'b StepProblem<'a>,
    smooth: bool,
}

impl StepObjective<'_, '_> {
    fn state(&self, x: &[f64]) -> Vec<f64> {
        self.p.u.iter().zip(x).map(|(a, b)| a + self.p.r * b).collect()
    }
}

impl Objective for StepObjective<'_, '_> {
    fn dim(&self) -> usize {
        self.p.system.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        let p = self.p;
        let v = self.state(x);
        if !p.system.in_domain(&v) {
            return f64::INFINITY;
        }
        p.system.dissipation(p.u, x) + (p.system.energy(p.t + p.r, &v) - dot(p.w, &v)) / p.r
    }
    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        if !self.smooth {
            return None;
        }
        let p = self.p;
        let dp = p.system.dissipation_grad(p.u, x)?;
        let de = p.system.energy_grad(p.t + p.r, &self.state(x))?;
        Some(dp.iter().zip(&de).zip(p.w).map(|((a, b), c)| a + b - c).collect())
    }
}

/// Minimizer of the step functional together with the dual selection and the
/// sum-rule certificates.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSolution {
    pub next: Vec<f64>,
    /// `ξ ∈ ∂E_{t+r}(next)` with `w - ξ ∈ ∂Ψ_u((next-u)/r)`.
    pub xi: Vec<f64>,
    pub value: f64,
    /// `Ψ_u(v̂) + Ψ*_u(w-ξ) - <w-ξ, v̂>`.
    pub fy_gap: f64,
    pub fy_tol: f64,
    /// `|ξ - ∇E_{t+r}(next)|`.
    pub e_residual: f64,
    pub e_tol: f64,
    pub iters: usize,
}

/// Solve one step. Systems with a registered proximal form use it; otherwise
/// the inner solver runs from the base state `u` (zero velocity).
pub fn solve_step(p: &StepProblem<'_>, settings: &SolverSettings) -> Result<StepSolution, EngineError> {
    p.validate()?;
    let sys = p.system;
    let (next, velocity, iters, e_tol) = match sys.closed_form_step(p.r, p.t, p.u, p.w) {
        Some(v) => {
            let scale = 1.0 + norm(p.w) + sys.energy_grad(p.t + p.r, &v).map_or(0.0, |g| norm(&g));
            (v, None, 0, settings.rel_grad_tol * scale)
        }
        None => {
            let smooth = p.gradient_unchecked(p.u).is_some();
            let obj = StepObjective { p, smooth };
            let spec = settings.spec_for(&obj, vec![0.0; p.u.len()]);
            let res = minimize(&obj, &spec)?;
            if !res.converged {
                log::debug!(
                    "step solver stopped at grad norm {:e} (tol {:e}) after {} iterations",
                    res.grad_norm,
                    spec.grad_tol,
                    res.iters
                );
            }
            (obj.state(&res.argmin), Some(res.argmin), res.iters, spec.grad_tol)
        }
    };
    let vh = velocity.unwrap_or_else(|| p.velocity(&next));
    let e_grad = sys.energy_grad(p.t + p.r, &next);
    let xi = match (sys.dissipation_grad(p.u, &vh), &e_grad) {
        (Some(dp), _) => sub(p.w, &dp),
        (None, Some(g)) => g.clone(),
        (None, None) => return Err(EngineError::NoDualSelection),
    };
    let eta = sub(p.w, &xi);
    let psi = sys.dissipation(p.u, &vh);
    let psi_star = sys.dissipation_conj(p.u, &eta);
    let fy_gap = psi + psi_star - dot(&eta, &vh);
    let fy_tol = gap_tolerance(psi, psi_star);
    let e_residual = match &e_grad {
        Some(g) => norm(&sub(&xi, g)),
        None => 0.0,
    };
    if fy_gap > 1e3 * fy_tol || e_residual > 1e3 * e_tol || !fy_gap.is_finite() {
        return Err(EngineError::SumRuleViolated {
            fy_gap,
            fy_tol,
            e_residual,
            e_tol,
        });
    }
    Ok(StepSolution {
        value: p.value_unchecked(&next),
        next,
        xi,
        fy_gap,
        fy_tol,
        e_residual,
        e_tol,
        iters,
    })
}
