use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::coefficients::{check_relations, probe_coercivity, probe_ellipticity};
use super::{CellCoefficients, Grid, RdsError};
use crate::model::GradientSystem;
use crate::vecops::norm;

/// Discrete ε-system on a vertex grid. States are node-major:
/// component `k` of node `i` sits at index `i * I + k`.
#[derive(Clone)]
pub struct RdsSystem {
    name: String,
    coeffs: Arc<dyn CellCoefficients>,
    eps: f64,
    grid: Grid,
    components: usize,
}

impl std::fmt::Debug for RdsSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RdsSystem")
            .field("name", &self.name)
            .field("eps", &self.eps)
            .field("grid", &self.grid)
            .field("components", &self.components)
            .finish()
    }
}

/// Build the ε-system after probing ellipticity, coercivity and the exponent
/// relations of the coefficients.
pub fn assemble_system(coeffs: Arc<dyn CellCoefficients>, eps: f64, grid: Grid) -> Result<RdsSystem, RdsError> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(RdsError::InvalidParameter(format!("eps = {eps} must lie in (0, 1]")));
    }
    probe_ellipticity(coeffs.as_ref(), 256, 11)?;
    if let Some(rep) = probe_coercivity(coeffs.as_ref(), 256, 12)? {
        log::debug!("coercivity probe: {:?}", rep.inferred_constants);
    }
    check_relations(&coeffs.growth(), 1)?;
    let components = coeffs.components();
    Ok(RdsSystem {
        name: format!("rds(eps={eps})"),
        coeffs,
        eps,
        grid,
        components,
    })
}

impl RdsSystem {
    pub fn with_name(mut self, name: &str) -> Self {
        self.name = name.into();
        self
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn coefficients(&self) -> &Arc<dyn CellCoefficients> {
        &self.coeffs
    }

    fn node<'a>(&self, u: &'a [f64], i: usize) -> &'a [f64] {
        &u[i * self.components..(i + 1) * self.components]
    }

    fn cell_state(&self, u: &[f64], j: usize) -> (Vec<f64>, Vec<f64>) {
        let (a, b) = (self.node(u, j), self.node(u, j + 1));
        let mid = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
        let grad = a.iter().zip(b).map(|(x, y)| (y - x) / self.grid.h).collect();
        (mid, grad)
    }

    fn y_node(&self, i: usize) -> f64 {
        self.grid.node(i) / self.eps
    }

    fn y_mid(&self, j: usize) -> f64 {
        self.grid.midpoint(j) / self.eps
    }

    /// Dissipation at the cell level with a replaced tensor oracle, used by
    /// effective models and diagnostics.
    pub fn lumped_quadratic(&self, base: &[f64], v: &[f64], tensor: impl Fn(usize, &[f64]) -> DMatrix<f64>) -> f64 {
        let i_c = self.components;
        (0..self.grid.nodes())
            .map(|i| {
                let a = tensor(i, self.node(base, i));
                let vi = DVector::from_column_slice(&v[i * i_c..(i + 1) * i_c]);
                0.5 * self.grid.weight(i) * vi.dot(&(&a * &vi))
            })
            .sum()
    }
}

impl GradientSystem for RdsSystem {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.grid.nodes() * self.components
    }

    fn energy(&self, _t: f64, u: &[f64]) -> f64 {
        (0..self.grid.cells)
            .map(|j| {
                let (m, g) = self.cell_state(u, j);
                self.grid.h * self.coeffs.energy_density(self.y_mid(j), &m, &g)
            })
            .sum()
    }

    fn power(&self, _t: f64, _u: &[f64]) -> f64 {
        0.0
    }

    fn energy_grad(&self, _t: f64, u: &[f64]) -> Option<Vec<f64>> {
        let i_c = self.components;
        let h = self.grid.h;
        let mut out = vec![0.0; u.len()];
        for j in 0..self.grid.cells {
            let (m, g) = self.cell_state(u, j);
            let (du, dg) = self.coeffs.energy_density_grad(self.y_mid(j), &m, &g);
            for k in 0..i_c {
                out[j * i_c + k] += 0.5 * h * du[k] - dg[k];
                out[(j + 1) * i_c + k] += 0.5 * h * du[k] + dg[k];
            }
        }
        Some(out)
    }

    fn dissipation(&self, base: &[f64], v: &[f64]) -> f64 {
        self.lumped_quadratic(base, v, |i, ui| self.coeffs.dissipation_tensor(self.y_node(i), ui))
    }

    fn dissipation_grad(&self, base: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        let i_c = self.components;
        let mut out = vec![0.0; v.len()];
        for i in 0..self.grid.nodes() {
            let a = self.coeffs.dissipation_tensor(self.y_node(i), self.node(base, i));
            let vi = DVector::from_column_slice(&v[i * i_c..(i + 1) * i_c]);
            let av = &a * vi * self.grid.weight(i);
            out[i * i_c..(i + 1) * i_c].copy_from_slice(av.as_slice());
        }
        Some(out)
    }

    fn dissipation_conj(&self, base: &[f64], xi: &[f64]) -> f64 {
        let i_c = self.components;
        (0..self.grid.nodes())
            .map(|i| {
                let a = self.coeffs.dissipation_tensor(self.y_node(i), self.node(base, i));
                let xi_i = &xi[i * i_c..(i + 1) * i_c];
                let q = if i_c == 1 {
                    xi_i[0] * xi_i[0] / a[(0, 0)]
                } else {
                    let x = DVector::from_column_slice(xi_i);
                    let sol = a.cholesky().expect("ellipticity was probed").solve(&x);
                    x.dot(&sol)
                };
                0.5 * q / self.grid.weight(i)
            })
            .sum()
    }

    fn dissipation_diag(&self, base: &[f64]) -> Option<Vec<f64>> {
        if self.components != 1 {
            return None;
        }
        Some(
            (0..self.grid.nodes())
                .map(|i| self.grid.weight(i) * self.coeffs.dissipation_tensor(self.y_node(i), self.node(base, i))[(0, 0)])
                .collect(),
        )
    }

    fn perturbation(&self, t: f64, u: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(u.len());
        for i in 0..self.grid.nodes() {
            let b = self.coeffs.forcing(self.y_node(i), t, self.node(u, i));
            out.extend(b.iter().map(|x| self.grid.weight(i) * x));
        }
        out
    }

    fn is_autonomous(&self) -> bool {
        true
    }

    fn in_domain(&self, u: &[f64]) -> bool {
        u.len() == self.dim()
            && u.iter().all(|x| x.is_finite())
            && (0..self.grid.cells).all(|j| {
                let (m, g) = self.cell_state(u, j);
                self.coeffs.in_domain(&m, &g)
            })
    }

    /// Lumped `L²` norm `(Σ ω_i |v_i|²)^{1/2}`.
    fn state_norm(&self, v: &[f64]) -> f64 {
        let i_c = self.components;
        (0..self.grid.nodes())
            .map(|i| self.grid.weight(i) * v[i * i_c..(i + 1) * i_c].iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}

/// Largest relative error between the assembled energy gradient and central
/// differences (step `1e-5`) along seeded random directions.
pub fn energy_grad_check(sys: &dyn GradientSystem, u: &[f64], directions: usize, seed: u64) -> f64 {
    let Some(g) = sys.energy_grad(0.0, u) else {
        return f64::INFINITY;
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..directions {
        let mut d: Vec<f64> = (0..u.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let nd = norm(&d);
        d.iter_mut().for_each(|x| *x /= nd);
        let up: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + h * b).collect();
        let dn: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a - h * b).collect();
        let fd = (sys.energy(0.0, &up) - sys.energy(0.0, &dn)) / (2.0 * h);
        let an: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        let scale = fd.abs().max(an.abs()).max(1e-8 * (1.0 + sys.energy(0.0, u).abs()));
        worst = worst.max((fd - an).abs() / scale);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::super::{Oscillation, ScalarCoefficients};
    use super::*;

    fn heat_sys(cells: usize, eps: f64) -> RdsSystem {
        assemble_system(Arc::new(ScalarCoefficients::heat()), eps, Grid::new(cells).unwrap()).unwrap()
    }

    #[test]
    fn constant_field_has_volume_energy_only() {
        let s = heat_sys(8, 0.5);
        let u = vec![0.7; 9];
        let oracle = 1.0 + 0.05 * 0.49;
        assert!((s.energy(0.0, &u) - oracle).abs() < 1e-14);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let s = heat_sys(16, 1.0);
        let u = s.grid().sample(|x| (3.0 * x).sin());
        assert!(energy_grad_check(&s, &u, 8, 1) < 1e-6);
        let q = assemble_system(
            Arc::new(ScalarCoefficients::default_instance()),
            0.125,
            Grid::new(32).unwrap(),
        )
        .unwrap();
        let u = q.grid().sample(|x| 1.0 + (3.0 * x).cos());
        assert!(energy_grad_check(&q, &u, 8, 2) < 1e-5);
    }

    #[test]
    fn oscillatory_dissipation_tends_to_arithmetic_half() {
        // Ψ^ε(1) = ∫ (2 + cos(2πx/ε))/2 dx -> 1
        let c = ScalarCoefficients {
            dissipation: Oscillation::cosine(2.0, 1.0),
            growth: super::super::Growth { c_a: 3.0, ..ScalarCoefficients::heat().growth },
            ..ScalarCoefficients::heat()
        };
        let mut prev = f64::INFINITY;
        for eps in [0.3, 0.15, 0.075] {
            let grid = Grid::new(1024).unwrap();
            let s = assemble_system(Arc::new(c.clone()), eps, grid).unwrap();
            let v = vec![1.0; grid.nodes()];
            let u = vec![0.0; grid.nodes()];
            // exact integral of (2 + cos(2πx/ε))/2 over [0,1]
            let exact = 1.0 + eps * (2.0 * std::f64::consts::PI / eps).sin() / (4.0 * std::f64::consts::PI);
            let val = s.dissipation(&u, &v);
            assert!((val - exact).abs() < 1e-5, "{val} vs {exact}");
            let dev = (val - 1.0).abs();
            assert!(dev <= prev + 1e-6);
            prev = dev;
        }
    }

    #[test]
    fn conjugate_of_lumped_form() {
        let s = heat_sys(8, 1.0);
        let base = vec![0.0; 9];
        let xi: Vec<f64> = (0..9).map(|i| (i as f64 * 0.37).sin()).collect();
        let m = s.dissipation_diag(&base).unwrap();
        let oracle: f64 = xi.iter().zip(&m).map(|(x, w)| 0.5 * x * x / w).sum();
        assert!((s.dissipation_conj(&base, &xi) - oracle).abs() < 1e-12);
    }
}
