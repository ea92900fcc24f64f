use nalgebra::{DMatrix, DVector};

use super::GradientSystem;

/// Time profile `g(t)` multiplying a constant forcing vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Forcing {
    None,
    Constant,
    Sine { omega: f64 },
}

impl Forcing {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Forcing::None => 0.0,
            Forcing::Constant => 1.0,
            Forcing::Sine { omega } => (omega * t).sin(),
        }
    }
}

/// Quadratic system
/// `E_t(u) = θ(t)(½uᵀKu + e0)`, `θ(t) = 1 + λt`,
/// `Ψ(v) = ½Σ m_i v_i²`, `B(t,u) = g(t) f + L u`.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub name: String,
    pub stiffness: DMatrix<f64>,
    pub shift: f64,
    pub lambda: f64,
    pub metric: Vec<f64>,
    pub forcing: Vec<f64>,
    pub profile: Forcing,
    pub coupling: DMatrix<f64>,
}

impl LinearSystem {
    /// Scalar `E = k/2 u² + e0`, `Ψ = ½v²`, constant forcing `b`.
    pub fn scalar(name: &str, k: f64, shift: f64, lambda: f64, b: f64) -> Self {
        LinearSystem {
            name: name.into(),
            stiffness: DMatrix::from_element(1, 1, k),
            shift,
            lambda,
            metric: vec![1.0],
            forcing: vec![b],
            profile: if b == 0.0 { Forcing::None } else { Forcing::Constant },
            coupling: DMatrix::zeros(1, 1),
        }
    }

    pub fn theta(&self, t: f64) -> f64 {
        1.0 + self.lambda * t
    }

    fn quad(&self, u: &[f64]) -> f64 {
        let u = DVector::from_column_slice(u);
        0.5 * u.dot(&(&self.stiffness * &u))
    }
}

impl GradientSystem for LinearSystem {
    fn name(&self) -> &str {
        &self.name
    }
    fn dim(&self) -> usize {
        self.metric.len()
    }
    fn energy(&self, t: f64, u: &[f64]) -> f64 {
        self.theta(t) * (self.quad(u) + self.shift)
    }
    fn power(&self, _t: f64, u: &[f64]) -> f64 {
        self.lambda * (self.quad(u) + self.shift)
    }
    fn energy_grad(&self, t: f64, u: &[f64]) -> Option<Vec<f64>> {
        let g = &self.stiffness * DVector::from_column_slice(u) * self.theta(t);
        Some(g.as_slice().to_vec())
    }
    fn dissipation(&self, _base: &[f64], v: &[f64]) -> f64 {
        0.5 * v.iter().zip(&self.metric).map(|(x, m)| m * x * x).sum::<f64>()
    }
    fn dissipation_grad(&self, _base: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        Some(v.iter().zip(&self.metric).map(|(x, m)| m * x).collect())
    }
    fn dissipation_conj(&self, _base: &[f64], xi: &[f64]) -> f64 {
        0.5 * xi.iter().zip(&self.metric).map(|(x, m)| x * x / m).sum::<f64>()
    }
    fn dissipation_diag(&self, _base: &[f64]) -> Option<Vec<f64>> {
        Some(self.metric.clone())
    }
    fn perturbation(&self, t: f64, u: &[f64]) -> Vec<f64> {
        let g = self.profile.eval(t);
        let lu = &self.coupling * DVector::from_column_slice(u);
        self.forcing.iter().zip(lu.iter()).map(|(f, l)| g * f + l).collect()
    }
    fn is_autonomous(&self) -> bool {
        self.lambda == 0.0
    }
}

/// Scalar system with state-dependent dissipation
/// `Ψ_u(v) = ½(1+u²)v²`, `E(u) = 1 + ½u² + ¼u⁴`, `B(t) = amplitude·sin t`.
#[derive(Debug, Clone)]
pub struct StateDependentScalar {
    pub name: String,
    pub amplitude: f64,
}

impl GradientSystem for StateDependentScalar {
    fn name(&self) -> &str {
        &self.name
    }
    fn dim(&self) -> usize {
        1
    }
    fn energy(&self, _t: f64, u: &[f64]) -> f64 {
        1.0 + 0.5 * u[0] * u[0] + 0.25 * u[0].powi(4)
    }
    fn power(&self, _t: f64, _u: &[f64]) -> f64 {
        0.0
    }
    fn energy_grad(&self, _t: f64, u: &[f64]) -> Option<Vec<f64>> {
        Some(vec![u[0] + u[0].powi(3)])
    }
    fn dissipation(&self, base: &[f64], v: &[f64]) -> f64 {
        0.5 * (1.0 + base[0] * base[0]) * v[0] * v[0]
    }
    fn dissipation_grad(&self, base: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        Some(vec![(1.0 + base[0] * base[0]) * v[0]])
    }
    fn dissipation_conj(&self, base: &[f64], xi: &[f64]) -> f64 {
        0.5 * xi[0] * xi[0] / (1.0 + base[0] * base[0])
    }
    fn dissipation_diag(&self, base: &[f64]) -> Option<Vec<f64>> {
        Some(vec![1.0 + base[0] * base[0]])
    }
    fn perturbation(&self, t: f64, _u: &[f64]) -> Vec<f64> {
        vec![self.amplitude * t.sin()]
    }
    fn is_autonomous(&self) -> bool {
        true
    }
}

/// Rate-independent friction plus viscosity:
/// `Ψ(v) = δ|v| + ½v²`, `E(u) = ½u²`, `B(t) = amplitude·sin(ωt)`.
/// The step has the closed form `v̂ = soft(w - u, δ)/(1 + r)`.
#[derive(Debug, Clone)]
pub struct StickSlip {
    pub name: String,
    pub delta: f64,
    pub amplitude: f64,
    pub omega: f64,
}

fn soft_threshold(x: f64, delta: f64) -> f64 {
    x.signum() * (x.abs() - delta).max(0.0)
}

impl GradientSystem for StickSlip {
    fn name(&self) -> &str {
        &self.name
    }
    fn dim(&self) -> usize {
        1
    }
    fn energy(&self, _t: f64, u: &[f64]) -> f64 {
        0.5 * u[0] * u[0]
    }
    fn power(&self, _t: f64, _u: &[f64]) -> f64 {
        0.0
    }
    fn energy_grad(&self, _t: f64, u: &[f64]) -> Option<Vec<f64>> {
        Some(vec![u[0]])
    }
    fn dissipation(&self, _base: &[f64], v: &[f64]) -> f64 {
        self.delta * v[0].abs() + 0.5 * v[0] * v[0]
    }
    fn dissipation_conj(&self, _base: &[f64], xi: &[f64]) -> f64 {
        let e = (xi[0].abs() - self.delta).max(0.0);
        0.5 * e * e
    }
    fn perturbation(&self, t: f64, _u: &[f64]) -> Vec<f64> {
        vec![self.amplitude * (self.omega * t).sin()]
    }
    fn is_autonomous(&self) -> bool {
        true
    }
    fn closed_form_step(&self, r: f64, _t: f64, u: &[f64], w: &[f64]) -> Option<Vec<f64>> {
        let v = soft_threshold(w[0] - u[0], self.delta) / (1.0 + r);
        Some(vec![u[0] + r * v])
    }
}
