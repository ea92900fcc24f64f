use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CellCoefficients, Growth, RdsError, YDependence};
use crate::model::{AssumptionReport, Forcing};

/// `mean + amp·cos(2πy)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Oscillation {
    pub mean: f64,
    pub amp: f64,
}

impl Oscillation {
    pub const fn constant(c: f64) -> Self {
        Oscillation { mean: c, amp: 0.0 }
    }

    pub const fn cosine(mean: f64, amp: f64) -> Self {
        Oscillation { mean, amp }
    }

    pub fn eval(&self, y: f64) -> f64 {
        self.mean + self.amp * (2.0 * PI * y).cos()
    }

    pub fn is_constant(&self) -> bool {
        self.amp == 0.0
    }
}

/// Scalar (`I = 1`) coefficient family
///
/// - `𝔸(y,u) = a(y)·s(u)` with `s(u) = (2+u²)/(1+u²)` when state-dependent, else 1
/// - `𝔽(y,u,U) = offset + ½k(y)U² + ½·mass·u² + ¼·quartic·u⁴`
/// - `𝔹(y,t,u) = forcing_amp·sin(2πy)·g(t) - damping·u`
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarCoefficients {
    pub dissipation: Oscillation,
    pub state_dependent: bool,
    pub diffusion: Oscillation,
    pub offset: f64,
    pub mass: f64,
    pub quartic: f64,
    pub forcing_amp: f64,
    pub profile: Forcing,
    pub damping: f64,
    pub growth: Growth,
}

const QUARTIC_GROWTH: Growth = Growth {
    p: 2.0,
    q: 4.0,
    r: 1.0,
    c_f: Some(0.25),
    c_a: 3.0,
    c_b: 1.0,
};

impl ScalarCoefficients {
    /// `𝔽 = 1 + ½U² + 0.05u²`, `𝔸 = 1`, `𝔹 = 0`.
    pub fn heat() -> Self {
        ScalarCoefficients {
            dissipation: Oscillation::constant(1.0),
            state_dependent: false,
            diffusion: Oscillation::constant(1.0),
            offset: 1.0,
            mass: 0.1,
            quartic: 0.0,
            forcing_amp: 0.0,
            profile: Forcing::None,
            damping: 0.0,
            growth: Growth {
                p: 2.0,
                q: 2.0,
                r: 1.0,
                c_f: Some(0.05),
                c_a: 1.0,
                c_b: 0.0,
            },
        }
    }

    /// `𝔽 = 1 + ½(2+cos 2πy)U² + ¼u⁴`, `𝔸 = 1`, `𝔹 = 0`.
    pub fn oscillatory_diffusion() -> Self {
        ScalarCoefficients {
            dissipation: Oscillation::constant(1.0),
            diffusion: Oscillation::cosine(2.0, 1.0),
            quartic: 1.0,
            mass: 0.0,
            growth: Growth { c_b: 0.0, ..QUARTIC_GROWTH },
            ..Self::heat()
        }
    }

    /// `𝔽 = 1 + ½U² + ¼u⁴`, `𝔸 = 2+cos 2πy`, `𝔹 = 0`.
    pub fn oscillatory_dissipation() -> Self {
        ScalarCoefficients {
            dissipation: Oscillation::cosine(2.0, 1.0),
            diffusion: Oscillation::constant(1.0),
            quartic: 1.0,
            mass: 0.0,
            growth: Growth { c_b: 0.0, ..QUARTIC_GROWTH },
            ..Self::heat()
        }
    }

    /// `𝔸 = a(y)`, `𝔽 = 1 + ½a(y)U² + ¼u⁴`, `𝔹 = sin(2πy) sin t - u/2`
    /// with `a(y) = 2 + cos 2πy`.
    pub fn default_instance() -> Self {
        ScalarCoefficients {
            dissipation: Oscillation::cosine(2.0, 1.0),
            diffusion: Oscillation::cosine(2.0, 1.0),
            quartic: 1.0,
            mass: 0.0,
            forcing_amp: 1.0,
            profile: Forcing::Sine { omega: 1.0 },
            damping: 0.5,
            growth: QUARTIC_GROWTH,
            ..Self::heat()
        }
    }

    /// `𝔸 = (2+cos 2πy)(2+u²)/(1+u²)`, `𝔽 = 1 + ½U² + ¼u⁴`, `𝔹 = 0`.
    pub fn state_dependent() -> Self {
        ScalarCoefficients {
            state_dependent: true,
            growth: Growth { c_a: 6.0, c_b: 0.0, ..QUARTIC_GROWTH },
            ..Self::oscillatory_dissipation()
        }
    }

    fn state_factor(&self, u: f64) -> f64 {
        if self.state_dependent {
            (2.0 + u * u) / (1.0 + u * u)
        } else {
            1.0
        }
    }

    fn reaction(&self, u: f64) -> f64 {
        self.offset + 0.5 * self.mass * u * u + 0.25 * self.quartic * u.powi(4)
    }
}

impl CellCoefficients for ScalarCoefficients {
    fn components(&self) -> usize {
        1
    }
    fn dissipation_tensor(&self, y: f64, u: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.dissipation.eval(y) * self.state_factor(u[0]))
    }
    fn energy_density(&self, y: f64, u: &[f64], grad: &[f64]) -> f64 {
        self.reaction(u[0]) + 0.5 * self.diffusion.eval(y) * grad[0] * grad[0]
    }
    fn energy_density_grad(&self, y: f64, u: &[f64], grad: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let du = self.mass * u[0] + self.quartic * u[0].powi(3);
        (vec![du], vec![self.diffusion.eval(y) * grad[0]])
    }
    fn forcing(&self, y: f64, t: f64, u: &[f64]) -> Vec<f64> {
        vec![self.forcing_amp * (2.0 * PI * y).sin() * self.profile.eval(t) - self.damping * u[0]]
    }
    fn growth(&self) -> Growth {
        self.growth
    }
    fn y_dependence(&self) -> YDependence {
        YDependence {
            dissipation: !self.dissipation.is_constant(),
            energy: !self.diffusion.is_constant(),
            forcing: self.forcing_amp != 0.0 && self.profile != Forcing::None,
        }
    }
    fn dissipation_depends_on_state(&self) -> bool {
        self.state_dependent
    }
    fn forcing_depends_on_time(&self) -> bool {
        self.forcing_amp != 0.0 && matches!(self.profile, Forcing::Sine { .. })
    }
    fn quadratic_in_gradient(&self, y: f64, u: &[f64]) -> Option<(f64, f64)> {
        Some((self.diffusion.eval(y), self.reaction(u[0])))
    }
}

struct CellSample {
    y: f64,
    t: f64,
    u: Vec<f64>,
    grad: Vec<f64>,
    v: Vec<f64>,
}

fn cell_samples(components: usize, count: usize, radius: f64, seed: u64) -> Vec<CellSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| CellSample {
            y: rng.gen_range(0.0..1.0),
            t: rng.gen_range(0.0..1.0),
            u: (0..components).map(|_| rng.gen_range(-radius..=radius)).collect(),
            grad: (0..components).map(|_| rng.gen_range(-radius..=radius)).collect(),
            v: (0..components).map(|_| rng.gen_range(-1.0..=1.0)).collect(),
        })
        .collect()
}

fn report(name: &str, samples: usize) -> AssumptionReport {
    AssumptionReport {
        probe_name: name.into(),
        samples,
        worst_violation: 0.0,
        inferred_constants: Default::default(),
        trace: Vec::new(),
    }
}

/// `(1/C_A)|v|² <= <𝔸v,v> <= C_A|v|²` on seeded samples.
pub fn probe_ellipticity(
    c: &dyn CellCoefficients,
    count: usize,
    seed: u64,
) -> Result<AssumptionReport, RdsError> {
    let ca = c.growth().c_a;
    let mut rep = report("ellipticity", count);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    let mut worst = f64::NEG_INFINITY;
    for s in cell_samples(c.components(), count, 3.0, seed) {
        let a = c.dissipation_tensor(s.y, &s.u);
        let asym = (&a - a.transpose()).amax();
        if asym > 1e-12 * (1.0 + a.amax()) {
            return Err(RdsError::EllipticityViolated(format!("𝔸 not symmetric at y = {}", s.y)));
        }
        let ev = a.symmetric_eigenvalues();
        let (emin, emax) = (ev.min(), ev.max());
        lo = lo.min(emin);
        hi = hi.max(emax);
        let nv = s.v.iter().map(|x| x * x).sum::<f64>();
        let av: f64 = (0..s.v.len())
            .map(|i| (0..s.v.len()).map(|j| a[(i, j)] * s.v[j]).sum::<f64>() * s.v[i])
            .sum();
        worst = worst.max(nv / ca - av).max(av - ca * nv).max(1.0 / ca - emin).max(emax - ca);
    }
    rep.inferred_constants.insert("min_eigenvalue".into(), lo);
    rep.inferred_constants.insert("max_eigenvalue".into(), hi);
    rep.inferred_constants.insert("C_A".into(), ca);
    rep.worst_violation = worst - 1e-12;
    if rep.worst_violation > 0.0 {
        return Err(RdsError::EllipticityViolated(format!(
            "eigenvalues in [{lo}, {hi}] not within [1/{ca}, {ca}]"
        )));
    }
    Ok(rep)
}

/// `𝔽(y,u,U) >= C_F(1 + |u|^q + |U|^p)` on seeded samples; `None` when the
/// coefficients declare no `C_F`.
pub fn probe_coercivity(
    c: &dyn CellCoefficients,
    count: usize,
    seed: u64,
) -> Result<Option<AssumptionReport>, RdsError> {
    let g = c.growth();
    let Some(cf) = g.c_f else {
        return Ok(None);
    };
    let mut rep = report("coercivity", count);
    let mut worst = f64::NEG_INFINITY;
    for s in cell_samples(c.components(), count, 3.0, seed) {
        let nu = s.u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let ng = s.grad.iter().map(|x| x * x).sum::<f64>().sqrt();
        let lower = cf * (1.0 + nu.powf(g.q) + ng.powf(g.p));
        let f = c.energy_density(s.y, &s.u, &s.grad);
        worst = worst.max(lower - f - 1e-12 * (1.0 + f.abs()));
    }
    rep.worst_violation = worst;
    rep.inferred_constants.insert("C_F".into(), cf);
    if worst > 0.0 {
        return Err(RdsError::CoercivityViolated(format!(
            "𝔽 falls below C_F(1+|u|^q+|U|^p) by {worst:e}"
        )));
    }
    Ok(Some(rep))
}

/// `1 - d/p > -d/q` and `q >= 2r`.
pub fn check_relations(g: &Growth, d: usize) -> Result<(), RdsError> {
    let d = d as f64;
    if !(1.0 - d / g.p > -d / g.q) {
        return Err(RdsError::RelationsViolated(format!(
            "1 - d/p = {} must exceed -d/q = {}",
            1.0 - d / g.p,
            -d / g.q
        )));
    }
    if !(g.q >= 2.0 * g.r) {
        return Err(RdsError::RelationsViolated(format!("q = {} must be >= 2r = {}", g.q, 2.0 * g.r)));
    }
    Ok(())
}

/// 1-periodicity of all three oracles under integer shifts of `y`.
pub fn probe_periodicity(c: &dyn CellCoefficients, count: usize, seed: u64) -> AssumptionReport {
    let mut rep = report("periodicity", count);
    let mut worst: f64 = 0.0;
    for (k, s) in cell_samples(c.components(), count, 2.0, seed).into_iter().enumerate() {
        let shift = (k % 5) as f64 - 2.0;
        let y2 = s.y + shift;
        let da = (c.dissipation_tensor(s.y, &s.u) - c.dissipation_tensor(y2, &s.u)).amax();
        let df = (c.energy_density(s.y, &s.u, &s.grad) - c.energy_density(y2, &s.u, &s.grad)).abs();
        let db = c
            .forcing(s.y, s.t, &s.u)
            .iter()
            .zip(c.forcing(y2, s.t, &s.u))
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        worst = worst.max(da).max(df).max(db);
    }
    rep.inferred_constants.insert("max_shift_deviation".into(), worst);
    rep.worst_violation = worst - 1e-10;
    rep
}
