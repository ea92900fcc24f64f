use nalgebra::DMatrix;
use pgflow_core::homog::{mean_tensors, solve_cell_problem, CellOptions, FhomTable, TableSpec};
use pgflow_core::rds::{CellCoefficients, Growth, Oscillation, ScalarCoefficients, YDependence};
use proptest::prelude::*;

/// The same coefficients translated by `shift` in the cell variable, with
/// the closed-form hook hidden so the generic cell solver runs.
struct Shifted {
    inner: ScalarCoefficients,
    shift: f64,
}

impl CellCoefficients for Shifted {
    fn components(&self) -> usize {
        1
    }
    fn dissipation_tensor(&self, y: f64, u: &[f64]) -> DMatrix<f64> {
        self.inner.dissipation_tensor(y + self.shift, u)
    }
    fn energy_density(&self, y: f64, u: &[f64], grad: &[f64]) -> f64 {
        self.inner.energy_density(y + self.shift, u, grad)
    }
    fn energy_density_grad(&self, y: f64, u: &[f64], grad: &[f64]) -> (Vec<f64>, Vec<f64>) {
        self.inner.energy_density_grad(y + self.shift, u, grad)
    }
    fn forcing(&self, y: f64, t: f64, u: &[f64]) -> Vec<f64> {
        self.inner.forcing(y + self.shift, t, u)
    }
    fn growth(&self) -> Growth {
        self.inner.growth()
    }
    fn y_dependence(&self) -> YDependence {
        self.inner.y_dependence()
    }
    fn dissipation_depends_on_state(&self) -> bool {
        self.inner.dissipation_depends_on_state()
    }
    fn forcing_depends_on_time(&self) -> bool {
        self.inner.forcing_depends_on_time()
    }
}

fn cell_value(c: &dyn CellCoefficients, u: f64, g: f64) -> f64 {
    let opts = CellOptions {
        resolution: 64,
        ..CellOptions::default()
    };
    solve_cell_problem(c, &[u], &[g], &opts).unwrap().value
}

fn with_diffusion(mean: f64, amp: f64) -> ScalarCoefficients {
    ScalarCoefficients {
        diffusion: Oscillation::cosine(mean, amp),
        dissipation: Oscillation::cosine(mean, amp),
        ..ScalarCoefficients::default_instance()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn harmonic_mean_is_below_arithmetic_mean(mean in 0.5f64..5.0, frac in 0.0f64..0.95, u in -2.0f64..2.0) {
        let amp = frac * mean;
        let c = with_diffusion(mean, amp);
        let m = mean_tensors(&c, &[u], 64).unwrap();
        let (aver, harm) = (m.aver[(0, 0)], m.harm[(0, 0)]);
        let tol = 1e-12 * aver;
        prop_assert!(harm <= aver + tol);
        if amp == 0.0 {
            prop_assert!((aver - harm).abs() <= tol);
        } else {
            // a(y) = mean + amp cos 2πy: harm = sqrt(mean² - amp²)
            prop_assert!(aver - harm > 0.5 * (mean - (mean * mean - amp * amp).sqrt()));
        }
    }

    #[test]
    fn cell_value_is_shift_invariant(shift in 0.0f64..1.0, u in -1.5f64..1.5, g in -4.0f64..4.0) {
        let base = Shifted { inner: ScalarCoefficients::default_instance(), shift: 0.0 };
        let moved = Shifted { inner: ScalarCoefficients::default_instance(), shift };
        let (a, b) = (cell_value(&base, u, g), cell_value(&moved, u, g));
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{} vs {}", a, b);
    }

    #[test]
    fn homogenized_density_is_below_the_average(u in -1.5f64..1.5, g in -4.0f64..4.0) {
        let c = Shifted { inner: ScalarCoefficients::oscillatory_diffusion(), shift: 0.0 };
        let n = 64;
        let avg: f64 = (0..n).map(|j| c.energy_density((j as f64 + 0.5) / n as f64, &[u], &[g])).sum::<f64>() / n as f64;
        prop_assert!(cell_value(&c, u, g) <= avg + 1e-12 * avg.abs());
    }
}

#[test]
fn tabulated_density_is_convex_and_coercive() {
    let c = ScalarCoefficients::default_instance();
    let spec = TableSpec::default();
    let table = FhomTable::build(&c, &spec).unwrap();
    assert!(table.doubling_estimate <= spec.tol);
    let growth = c.growth();
    let c_f = growth.c_f.unwrap();
    let (u_lo, u_hi) = spec.u_range;
    let (g_lo, g_hi) = spec.grad_range;
    let k = 41;
    let pts: Vec<(f64, f64)> = (0..k)
        .flat_map(|i| (0..k).map(move |j| (i, j)))
        .map(|(i, j)| {
            (
                u_lo + (u_hi - u_lo) * i as f64 / (k - 1) as f64,
                g_lo + (g_hi - g_lo) * j as f64 / (k - 1) as f64,
            )
        })
        .collect();
    for &(u, g) in &pts {
        let f = table.value(u, g).unwrap();
        let bound = c_f * (1.0 + u.abs().powf(growth.q) + g.abs().powf(growth.p));
        assert!(f >= bound - spec.tol, "({u}, {g}): {f} < {bound}");
    }
    // midpoint convexity along segments between sample pairs
    for (a, b) in pts.iter().zip(pts.iter().rev()).step_by(7) {
        let m = (0.5 * (a.0 + b.0), 0.5 * (a.1 + b.1));
        let fm = table.value(m.0, m.1).unwrap();
        let avg = 0.5 * (table.value(a.0, a.1).unwrap() + table.value(b.0, b.1).unwrap());
        assert!(fm <= avg + spec.tol, "{a:?} {b:?}");
    }
}
