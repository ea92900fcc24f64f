use std::sync::Arc;

use pgflow_core::convex::{
    fenchel_young_gap, gap_tolerance, legendre_fenchel, subdiff_residual, Functional, SearchBox,
};
use pgflow_core::model::{build_system, dissipation_conj_functional, dissipation_functional};
use pgflow_core::vecops::dot;
use proptest::prelude::*;

fn vec_in(n: usize, r: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-r..r, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn fenchel_young_gap_is_nonnegative(u in vec_in(3, 5.0), xi in vec_in(3, 5.0), p in 1.2f64..4.0) {
        for f in [Functional::quadratic(vec![0.5, 1.0, 3.0]), Functional::power(3, p)] {
            let fs = f.closed_form_conjugate().unwrap();
            let gap = fenchel_young_gap(&f, &fs, &u, &xi).unwrap();
            let scale = 1.0 + f.eval(&u).abs() + fs.eval(&xi).abs() + dot(&xi, &u).abs();
            prop_assert!(gap >= -10.0 * f64::EPSILON * scale, "gap {gap}");
        }
    }

    #[test]
    fn catalog_dissipations_satisfy_fenchel_young(base in -2.0f64..2.0, v in -4.0f64..4.0, xi in -4.0f64..4.0) {
        for name in ["decay", "state-dependent", "stick-slip"] {
            let sys = build_system(name).unwrap();
            let f = dissipation_functional(sys.clone(), vec![base]);
            let fs = dissipation_conj_functional(sys, vec![base]);
            let gap = fenchel_young_gap(&f, &fs, &[v], &[xi]).unwrap();
            let scale = 1.0 + f.eval(&[v]).abs() + fs.eval(&[xi]).abs() + (xi * v).abs();
            prop_assert!(gap >= -10.0 * f64::EPSILON * scale);
        }
    }

    /// Zero gap and a nonpositive sampled residual classify the same pairs.
    #[test]
    fn gap_and_residual_agree(u in vec_in(2, 3.0), noise in vec_in(2, 1.0), exact in any::<bool>()) {
        let f = Functional::quadratic(vec![1.0, 2.0]);
        let fs = f.closed_form_conjugate().unwrap();
        let g = f.grad(&u).unwrap();
        let xi: Vec<f64> = if exact {
            g.clone()
        } else {
            // keep off-subgradient covectors clearly away from the gray zone
            g.iter().zip(&noise).map(|(a, d)| a + d.signum() * (0.05 + d.abs())).collect()
        };
        let gap = fenchel_young_gap(&f, &fs, &u, &xi).unwrap();
        let tol = gap_tolerance(f.eval(&u), fs.eval(&xi));
        let res = subdiff_residual(&f, &u, &xi).unwrap();
        prop_assert_eq!(gap <= tol, res <= tol, "gap {} residual {} tol {}", gap, res, tol);
        prop_assert_eq!(gap <= tol, exact);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// `(f*)*` from a numeric `f*` on a covector grid reproduces `f`.
    #[test]
    fn biconjugate_recovers_function(p in 1.5f64..3.0, u in -1.5f64..1.5) {
        let f = Functional::power(1, p).without_conjugate();
        let search = SearchBox::cube(1, 50.0);
        let q = p / (p - 1.0);
        let n = 401;
        let xi_max = 1.2 * 1.5f64.powf(p - 1.0) + 0.5;
        let grid: Vec<(f64, f64)> = (0..n)
            .map(|k| -xi_max + 2.0 * xi_max * k as f64 / (n - 1) as f64)
            .map(|x| (x, legendre_fenchel(&f, &[x], &search).unwrap()))
            .collect();
        for (x, fx) in grid.iter().step_by(40) {
            prop_assert!((fx - x.abs().powf(q) / q).abs() < 1e-7);
        }
        let bi = grid.iter().map(|(x, fx)| x * u - fx).fold(f64::NEG_INFINITY, f64::max);
        let h = 2.0 * xi_max / (n - 1) as f64;
        // max over a grid of spacing h misses the sup by at most ½h²·max (f*)''
        let curv = (q - 1.0) * xi_max.powf((q - 2.0).max(0.0)) + 1.0 / (q - 1.0);
        prop_assert!(bi <= f.eval(&[u]) + 1e-7);
        prop_assert!(f.eval(&[u]) - bi <= 0.5 * h * h * curv + 1e-7, "{} vs {}", bi, f.eval(&[u]));
    }
}

#[test]
fn conjugates_of_converging_quadratics_converge() {
    let a = 2.0;
    let search = SearchBox::cube(1, 1e4);
    let xis = [-3.0, -0.5, 0.7, 2.5];
    let mut prev = f64::INFINITY;
    for n in [1, 2, 4, 8, 16, 32] {
        let an = a + (n as f64).recip();
        let f = Functional::quadratic(vec![an]).without_conjugate();
        let err = xis
            .iter()
            .map(|&x| {
                let num = legendre_fenchel(&f, &[x], &search).unwrap();
                assert!((num - 0.5 * x * x / an).abs() < 1e-8);
                (num - 0.5 * x * x / a).abs()
            })
            .fold(0.0, f64::max);
        assert!(err < prev);
        prev = err;
    }
    assert!(prev < 0.1);
}

#[test]
fn numeric_conjugate_matches_quadratic_dissipation() {
    let sys = build_system("coupled-16").unwrap();
    let base = vec![0.0; 16];
    let f = dissipation_functional(Arc::clone(&sys), base.clone()).without_conjugate();
    let search = SearchBox::cube(16, 100.0);
    let xi: Vec<f64> = (0..16).map(|i| (i as f64 * 0.7).sin()).collect();
    let num = legendre_fenchel(&f, &xi, &search).unwrap();
    assert!((num - sys.dissipation_conj(&base, &xi)).abs() < 1e-10 * (1.0 + num.abs()));
}
