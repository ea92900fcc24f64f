//! Approximate minimization of smooth (or registered derivative-free)
//! objectives: the contract every step of the scheme relies on.
//!
//! Two gradient modes share one backtracking line search: plain steepest
//! descent and a limited-memory quasi-Newton acceleration (the default).
//! Objectives without a gradient fall back to compass polling.
//!
//! The line search accepts a step on the Armijo condition. Close to the
//! minimizer the decrease in `f` drops below the roundoff of `f` itself, so a
//! step is also accepted when the value change is within
//! `ROUNDOFF_ALLOWANCE * (1 + |f|)` and the directional derivative has
//! shrunk (approximate Wolfe test). This is the only way an iterate can rise,
//! and only by that allowance.

use thiserror::Error;

use crate::vecops::{add_scaled, axpy, dot, norm, norm_inf};

/// Relative value change treated as roundoff by the line search.
pub const ROUNDOFF_ALLOWANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid minimization spec: {0}")]
    InvalidSpec(String),
    #[error("objective returned a non-finite value ({value}) at iteration {iter}")]
    NonFiniteObjective { iter: usize, value: f64 },
    #[error("no convergence after {iters} iterations (gradient norm {grad_norm:e})")]
    MaxItersExceeded {
        iters: usize,
        grad_norm: f64,
        best: Box<MinimizeResult>,
    },
}

/// Something that can be minimized. `gradient` returning `None` selects the
/// derivative-free path.
pub trait Objective {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

/// Closure-backed objective.
pub struct FnObjective<F, G> {
    dim: usize,
    f: F,
    g: Option<G>,
}

impl<F> FnObjective<F, fn(&[f64]) -> Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    pub fn new(dim: usize, f: F) -> Self {
        FnObjective { dim, f, g: None }
    }
}

impl<F, G> FnObjective<F, G>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    pub fn with_gradient(dim: usize, f: F, g: G) -> Self {
        FnObjective { dim, f, g: Some(g) }
    }
}

impl<F, G> Objective for FnObjective<F, G>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.g.as_ref().map(|g| g(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    GradientDescent,
    Lbfgs,
}

#[derive(Debug, Clone)]
pub struct MinimizeSpec {
    pub start: Vec<f64>,
    pub grad_tol: f64,
    pub f_tol: f64,
    pub max_iters: usize,
    pub method: Method,
}

impl MinimizeSpec {
    pub fn new(start: Vec<f64>, grad_tol: f64, max_iters: usize) -> Self {
        MinimizeSpec {
            start,
            grad_tol,
            f_tol: 0.0,
            max_iters,
            method: Method::Lbfgs,
        }
    }

    fn validate(&self, dim: usize) -> Result<(), SolverError> {
        if self.start.len() != dim {
            return Err(SolverError::InvalidSpec(format!(
                "start has length {} but objective dimension is {dim}",
                self.start.len()
            )));
        }
        if !(self.grad_tol > 0.0) {
            return Err(SolverError::InvalidSpec("grad_tol must be > 0".into()));
        }
        if !(self.f_tol >= 0.0) {
            return Err(SolverError::InvalidSpec("f_tol must be >= 0".into()));
        }
        if self.max_iters < 1 {
            return Err(SolverError::InvalidSpec("max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// Relative solver settings, turned into a concrete [`MinimizeSpec`] once the
/// start gradient is known.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct SolverSettings {
    /// `grad_tol = rel_grad_tol * (1 + |grad at start|)`.
    pub rel_grad_tol: f64,
    /// `max_iters = max_iters_per_dim * dim` unless `max_iters` is set.
    pub max_iters_per_dim: usize,
    pub max_iters: Option<usize>,
    pub method: Method,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            rel_grad_tol: 1e-9,
            max_iters_per_dim: 500,
            max_iters: None,
            method: Method::Lbfgs,
        }
    }
}

impl SolverSettings {
    pub fn spec_for(&self, obj: &dyn Objective, start: Vec<f64>) -> MinimizeSpec {
        let g0 = obj.gradient(&start).map(|g| norm(&g)).unwrap_or(0.0);
        let g0 = if g0.is_finite() { g0 } else { 0.0 };
        MinimizeSpec {
            grad_tol: self.rel_grad_tol * (1.0 + g0),
            f_tol: 0.0,
            max_iters: self
                .max_iters
                .unwrap_or(self.max_iters_per_dim * obj.dim().max(1)),
            method: self.method,
            start,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub argmin: Vec<f64>,
    pub value: f64,
    /// Gradient norm at `argmin`; for derivative-free runs, the final poll size.
    pub grad_norm: f64,
    pub iters: usize,
    pub converged: bool,
    /// Objective values of the accepted iterates, starting with the start point.
    pub history: Vec<f64>,
}

impl MinimizeResult {
    pub fn require_converged(self) -> Result<Self, SolverError> {
        if self.converged {
            Ok(self)
        } else {
            Err(SolverError::MaxItersExceeded {
                iters: self.iters,
                grad_norm: self.grad_norm,
                best: Box::new(self),
            })
        }
    }
}

/// Minimize `obj` from `spec.start`.
///
/// Returns a result with `converged = false` (not an error) when the iteration
/// budget runs out; use [`MinimizeResult::require_converged`] to turn that
/// into [`SolverError::MaxItersExceeded`].
pub fn minimize(obj: &dyn Objective, spec: &MinimizeSpec) -> Result<MinimizeResult, SolverError> {
    spec.validate(obj.dim())?;
    let f0 = obj.value(&spec.start);
    if !f0.is_finite() {
        return Err(SolverError::NonFiniteObjective { iter: 0, value: f0 });
    }
    match obj.gradient(&spec.start) {
        Some(g0) => gradient_method(obj, spec, f0, g0),
        None => compass_search(obj, spec, f0),
    }
}

const LBFGS_MEMORY: usize = 10;
const ARMIJO_C1: f64 = 1e-4;
const WOLFE_SIGMA: f64 = 0.9;
const MAX_BACKTRACKS: usize = 60;

struct Accepted {
    alpha: f64,
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
}

fn line_search(
    obj: &dyn Objective,
    x: &[f64],
    f: f64,
    d: &[f64],
    dphi0: f64,
    alpha0: f64,
    iter: usize,
) -> Result<Option<Accepted>, SolverError> {
    let mut alpha = alpha0;
    let allowance = ROUNDOFF_ALLOWANCE * (1.0 + f.abs());
    for _ in 0..MAX_BACKTRACKS {
        let xt = add_scaled(x, alpha, d);
        let ft = obj.value(&xt);
        if ft.is_nan() || ft == f64::NEG_INFINITY {
            return Err(SolverError::NonFiniteObjective { iter, value: ft });
        }
        if ft.is_finite() {
            if ft <= f + ARMIJO_C1 * alpha * dphi0 {
                let g = obj.gradient(&xt).expect("gradient vanished mid-run");
                return Ok(Some(Accepted { alpha, x: xt, f: ft, g }));
            }
            if (ft - f).abs() <= allowance {
                let g = obj.gradient(&xt).expect("gradient vanished mid-run");
                let dphi = dot(&g, d);
                if dphi >= WOLFE_SIGMA * dphi0 && dphi <= -0.8 * dphi0 && norm(&g) < f64::MAX {
                    return Ok(Some(Accepted { alpha, x: xt, f: ft, g }));
                }
            }
        }
        alpha *= 0.5;
    }
    Ok(None)
}

fn two_loop(g: &[f64], mem: &[(Vec<f64>, Vec<f64>, f64)]) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(mem.len());
    for (s, y, rho) in mem.iter().rev() {
        let a = rho * dot(s, &q);
        axpy(-a, y, &mut q);
        alphas.push(a);
    }
    if let Some((s, y, _)) = mem.last() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in mem.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        axpy(a - b, s, &mut q);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

fn gradient_method(
    obj: &dyn Objective,
    spec: &MinimizeSpec,
    f0: f64,
    g0: Vec<f64>,
) -> Result<MinimizeResult, SolverError> {
    let mut x = spec.start.clone();
    let mut f = f0;
    let mut g = g0;
    let mut history = vec![f];
    let mut mem: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    let mut last_alpha: f64 = 1.0;
    let mut iters = 0;

    while iters < spec.max_iters {
        let gn = norm(&g);
        if !gn.is_finite() {
            return Err(SolverError::NonFiniteObjective { iter: iters, value: gn });
        }
        if gn <= spec.grad_tol {
            break;
        }
        let use_memory = spec.method == Method::Lbfgs && !mem.is_empty();
        let mut d = if use_memory {
            two_loop(&g, &mem)
        } else {
            g.iter().map(|v| -v).collect()
        };
        let mut dphi0 = dot(&g, &d);
        if !(dphi0 < 0.0) {
            mem.clear();
            d = g.iter().map(|v| -v).collect();
            dphi0 = -gn * gn;
        }
        let alpha0 = match spec.method {
            Method::Lbfgs if !mem.is_empty() => 1.0,
            _ if iters == 0 => (1.0 / gn).min(1.0),
            _ => (2.0 * last_alpha).min(1e12),
        };
        let accepted = match line_search(obj, &x, f, &d, dphi0, alpha0, iters)? {
            Some(a) => a,
            None if !mem.is_empty() || spec.method == Method::GradientDescent => {
                // retry once along steepest descent with a fresh scale
                mem.clear();
                let d: Vec<f64> = g.iter().map(|v| -v).collect();
                match line_search(obj, &x, f, &d, -gn * gn, 1.0 / gn, iters)? {
                    Some(a) => a,
                    None => break,
                }
            }
            None => break,
        };
        iters += 1;
        last_alpha = accepted.alpha;
        if spec.method == Method::Lbfgs {
            let s: Vec<f64> = accepted.x.iter().zip(&x).map(|(p, q)| p - q).collect();
            let y: Vec<f64> = accepted.g.iter().zip(&g).map(|(p, q)| p - q).collect();
            let sy = dot(&s, &y);
            if sy > 1e-14 * norm(&s) * norm(&y) && sy > 0.0 {
                if mem.len() == LBFGS_MEMORY {
                    mem.remove(0);
                }
                mem.push((s, y, 1.0 / sy));
            }
        }
        x = accepted.x;
        f = accepted.f;
        g = accepted.g;
        history.push(f);
    }
    let grad_norm = norm(&g);
    Ok(MinimizeResult {
        argmin: x,
        value: f,
        grad_norm,
        iters,
        converged: grad_norm <= spec.grad_tol,
        history,
    })
}

fn compass_search(
    obj: &dyn Objective,
    spec: &MinimizeSpec,
    f0: f64,
) -> Result<MinimizeResult, SolverError> {
    let n = spec.start.len();
    let mut x = spec.start.clone();
    let mut f = f0;
    let mut history = vec![f];
    let mut mesh = 0.1 * (1.0 + norm_inf(&x));
    let stop = if spec.f_tol > 0.0 {
        spec.grad_tol.min(spec.f_tol.sqrt())
    } else {
        spec.grad_tol
    };
    let mut iters = 0;
    while iters < spec.max_iters && mesh > stop {
        iters += 1;
        let mut improved = false;
        'poll: for i in 0..n {
            for sign in [1.0, -1.0] {
                let mut xt = x.clone();
                xt[i] += sign * mesh;
                let ft = obj.value(&xt);
                if ft.is_nan() || ft == f64::NEG_INFINITY {
                    return Err(SolverError::NonFiniteObjective { iter: iters, value: ft });
                }
                if ft < f {
                    x = xt;
                    f = ft;
                    improved = true;
                    break 'poll;
                }
            }
        }
        if improved {
            history.push(f);
            mesh *= 2.0;
        } else {
            mesh *= 0.5;
        }
    }
    Ok(MinimizeResult {
        argmin: x,
        value: f,
        grad_norm: mesh,
        iters,
        converged: mesh <= spec.grad_tol,
        history,
    })
}
