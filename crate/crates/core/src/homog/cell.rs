use serde::Serialize;

use super::HomogError;
use crate::rds::CellCoefficients;
use crate::solver::{minimize, Objective, SolverSettings};
use crate::vecops::norm_inf;

#[derive(Debug, Clone, Copy)]
pub struct CellOptions {
    /// Corrector nodes on the unit cell; at least 8.
    pub resolution: usize,
    pub solver: SolverSettings,
}

impl Default for CellOptions {
    fn default() -> Self {
        CellOptions {
            resolution: 64,
            solver: SolverSettings::default(),
        }
    }
}

/// Discrete cell problem at the macro state `(u, U)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellProblem {
    pub u: Vec<f64>,
    pub grad: Vec<f64>,
    /// Zero-mean periodic corrector, node-major (`resolution × I`).
    pub corrector: Vec<f64>,
    pub value: f64,
    /// Sup norm of the discrete Euler-Lagrange residual.
    pub kkt_residual: f64,
    pub iters: usize,
    pub converged: bool,
    /// `∂_u F_hom` and `∂_U F_hom` (cell averages at the optimum).
    pub d_u: Vec<f64>,
    pub d_grad: Vec<f64>,
    /// Value of the harmonic-mean closed form, when it applies.
    pub fast_path: Option<f64>,
}

struct CellObjective<'a> {
    c: &'a dyn CellCoefficients,
    u: &'a [f64],
    grad: &'a [f64],
    n: usize,
}

impl CellObjective<'_> {
    fn i_c(&self) -> usize {
        self.c.components()
    }

    fn y(&self, j: usize) -> f64 {
        (j as f64 + 0.5) / self.n as f64
    }

    fn project(&self, x: &[f64]) -> Vec<f64> {
        let i_c = self.i_c();
        let mut out = x.to_vec();
        for k in 0..i_c {
            let mean = (0..self.n).map(|j| x[j * i_c + k]).sum::<f64>() / self.n as f64;
            (0..self.n).for_each(|j| out[j * i_c + k] -= mean);
        }
        out
    }

    /// Local gradient `U + Dφ` on cell `j`.
    fn local(&self, phi: &[f64], j: usize) -> Vec<f64> {
        let i_c = self.i_c();
        let jn = (j + 1) % self.n;
        (0..i_c)
            .map(|k| self.grad[k] + self.n as f64 * (phi[jn * i_c + k] - phi[j * i_c + k]))
            .collect()
    }

    fn fluxes(&self, phi: &[f64]) -> Vec<(Vec<f64>, Vec<f64>)> {
        (0..self.n)
            .map(|j| self.c.energy_density_grad(self.y(j), self.u, &self.local(phi, j)))
            .collect()
    }

    fn euler_lagrange(&self, fl: &[(Vec<f64>, Vec<f64>)]) -> Vec<f64> {
        let i_c = self.i_c();
        let mut g = vec![0.0; self.n * i_c];
        for j in 0..self.n {
            let jp = (j + self.n - 1) % self.n;
            for k in 0..i_c {
                g[j * i_c + k] = fl[jp].1[k] - fl[j].1[k];
            }
        }
        g
    }
}

impl Objective for CellObjective<'_> {
    fn dim(&self) -> usize {
        self.n * self.i_c()
    }
    fn value(&self, x: &[f64]) -> f64 {
        let phi = self.project(x);
        (0..self.n)
            .map(|j| self.c.energy_density(self.y(j), self.u, &self.local(&phi, j)))
            .sum::<f64>()
            / self.n as f64
    }
    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        let phi = self.project(x);
        Some(self.euler_lagrange(&self.fluxes(&phi)))
    }
}

fn averages(fl: &[(Vec<f64>, Vec<f64>)], i_c: usize) -> (Vec<f64>, Vec<f64>) {
    let n = fl.len() as f64;
    let mut du = vec![0.0; i_c];
    let mut dg = vec![0.0; i_c];
    for (a, b) in fl {
        for k in 0..i_c {
            du[k] += a[k] / n;
            dg[k] += b[k] / n;
        }
    }
    (du, dg)
}

fn validate(c: &dyn CellCoefficients, u: &[f64], grad: &[f64], resolution: usize) -> Result<(), HomogError> {
    if resolution < 8 {
        return Err(HomogError::InvalidParameter(format!("cell resolution {resolution} must be >= 8")));
    }
    let i_c = c.components();
    if u.len() != i_c || grad.len() != i_c {
        return Err(HomogError::InvalidParameter(format!(
            "macro state has lengths ({}, {}), expected {i_c}",
            u.len(),
            grad.len()
        )));
    }
    Ok(())
}

/// Harmonic-mean solution of the scalar cell problem for densities
/// `f0(u) + ½k(y)U²`, on the same midpoint sampling as the generic solver.
pub fn cell_closed_form(
    c: &dyn CellCoefficients,
    u: &[f64],
    grad: &[f64],
    resolution: usize,
) -> Result<Option<CellProblem>, HomogError> {
    validate(c, u, grad, resolution)?;
    if c.components() != 1 {
        return Ok(None);
    }
    let n = resolution;
    let obj = CellObjective { c, u, grad, n };
    let mut ks = Vec::with_capacity(n);
    let mut f0 = 0.0;
    for j in 0..n {
        match c.quadratic_in_gradient(obj.y(j), u) {
            Some((k, f)) => {
                ks.push(k);
                f0 = f;
            }
            None => return Ok(None),
        }
    }
    let k_harm = n as f64 / ks.iter().map(|k| 1.0 / k).sum::<f64>();
    let big_u = grad[0];
    let mut phi = Vec::with_capacity(n);
    let mut acc = 0.0;
    for k in &ks {
        phi.push(acc);
        acc += big_u * (k_harm / k - 1.0) / n as f64;
    }
    let phi = obj.project(&phi);
    let value = f0 + 0.5 * k_harm * big_u * big_u;
    let fl = obj.fluxes(&phi);
    let (d_u, _) = averages(&fl, 1);
    Ok(Some(CellProblem {
        u: u.to_vec(),
        grad: grad.to_vec(),
        kkt_residual: norm_inf(&obj.euler_lagrange(&fl)),
        corrector: phi,
        value,
        iters: 0,
        converged: true,
        d_u,
        d_grad: vec![k_harm * big_u],
        fast_path: Some(value),
    }))
}

/// Minimize `φ ↦ ∫𝔽(y, u, U + φ'(y))dy` over zero-mean periodic correctors
/// (midpoint sampling, forward differences). The scalar quadratic case is
/// cross-checked against [`cell_closed_form`].
pub fn solve_cell_problem(
    c: &dyn CellCoefficients,
    u: &[f64],
    grad: &[f64],
    opts: &CellOptions,
) -> Result<CellProblem, HomogError> {
    validate(c, u, grad, opts.resolution)?;
    let n = opts.resolution;
    let obj = CellObjective { c, u, grad, n };
    let spec = opts.solver.spec_for(&obj, vec![0.0; obj.dim()]);
    let res = minimize(&obj, &spec)?.require_converged()?;
    let phi = obj.project(&res.argmin);
    let fl = obj.fluxes(&phi);
    let (d_u, d_grad) = averages(&fl, c.components());
    let fast_path = cell_closed_form(c, u, grad, n)?.map(|p| p.value);
    if let Some(v) = fast_path {
        let gap = (v - res.value).abs();
        if gap > 1e-8 * (1.0 + v.abs()) {
            log::warn!("cell problem and harmonic-mean closed form differ by {gap:e}");
        }
    }
    Ok(CellProblem {
        u: u.to_vec(),
        grad: grad.to_vec(),
        kkt_residual: norm_inf(&obj.euler_lagrange(&fl)),
        corrector: phi,
        value: res.value,
        iters: res.iters,
        converged: res.converged,
        d_u,
        d_grad,
        fast_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rds::{Oscillation, ScalarCoefficients};

    fn pure_diffusion() -> ScalarCoefficients {
        ScalarCoefficients {
            offset: 0.0,
            quartic: 0.0,
            ..ScalarCoefficients::oscillatory_diffusion()
        }
    }

    #[test]
    fn harmonic_mean_cell_value() {
        let c = pure_diffusion();
        let opts = CellOptions {
            resolution: 256,
            ..CellOptions::default()
        };
        let p = solve_cell_problem(&c, &[0.0], &[1.0], &opts).unwrap();
        let target = 0.5 * 3.0_f64.sqrt();
        assert!((p.value - target).abs() < 1e-6, "{}", p.value);
        assert!((p.fast_path.unwrap() - p.value).abs() < 1e-9);
        assert!(p.kkt_residual < 1e-6);
        let mean: f64 = p.corrector.iter().sum::<f64>() / 256.0;
        assert!(mean.abs() < 1e-14);
    }

    #[test]
    fn brute_force_corrector_oracle() {
        // independent oracle: plain gradient descent on the resolution-64
        // discrete functional with an explicit periodic difference stencil
        let n = 64;
        let a = |j: usize| 2.0 + (2.0 * std::f64::consts::PI * (j as f64 + 0.5) / n as f64).cos();
        let mut phi = vec![0.0; n];
        let step = 1.0 / (4.0 * 3.0 * n as f64);
        for _ in 0..200_000 {
            let mut g = vec![0.0; n];
            for j in 0..n {
                let s = a(j) * (1.0 + n as f64 * (phi[(j + 1) % n] - phi[j]));
                g[j] -= s;
                g[(j + 1) % n] += s;
            }
            phi.iter_mut().zip(&g).for_each(|(p, d)| *p -= step * d);
        }
        let value: f64 = (0..n)
            .map(|j| 0.5 * a(j) * (1.0 + n as f64 * (phi[(j + 1) % n] - phi[j])).powi(2))
            .sum::<f64>()
            / n as f64;
        let p = solve_cell_problem(&pure_diffusion(), &[0.0], &[1.0], &CellOptions::default()).unwrap();
        assert!((p.value - value).abs() < 1e-9, "{} vs {value}", p.value);
    }

    #[test]
    fn zero_gradient_needs_no_corrector() {
        let c = ScalarCoefficients::oscillatory_diffusion();
        let p = solve_cell_problem(&c, &[0.8], &[0.0], &CellOptions::default()).unwrap();
        assert!(norm_inf(&p.corrector) == 0.0);
        assert!((p.value - (1.0 + 0.25 * 0.8_f64.powi(4))).abs() < 1e-14);
    }

    #[test]
    fn y_independent_density_is_its_own_homogenization() {
        let c = ScalarCoefficients::heat();
        let p = solve_cell_problem(&c, &[0.5], &[1.5], &CellOptions::default()).unwrap();
        assert!(norm_inf(&p.corrector) < 1e-15);
        let direct = c.energy_density(0.3, &[0.5], &[1.5]);
        assert!((p.value - direct).abs() < 1e-14);
    }

    #[test]
    fn resolution_guard() {
        let opts = CellOptions {
            resolution: 4,
            ..CellOptions::default()
        };
        assert!(solve_cell_problem(&pure_diffusion(), &[0.0], &[1.0], &opts).is_err());
    }

    #[test]
    fn refinement_does_not_increase_value() {
        let c = ScalarCoefficients {
            diffusion: Oscillation::cosine(3.0, 2.0),
            ..pure_diffusion()
        };
        let mut prev = f64::INFINITY;
        for res in [8, 16, 32, 64, 128] {
            let opts = CellOptions {
                resolution: res,
                ..CellOptions::default()
            };
            let v = solve_cell_problem(&c, &[0.0], &[1.0], &opts).unwrap().value;
            assert!(v <= prev + 1e-12, "res {res}: {v} > {prev}");
            prev = v;
        }
        assert!((prev - 0.5 * 5.0_f64.sqrt()).abs() < 1e-8);
    }
}
