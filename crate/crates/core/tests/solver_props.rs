use nalgebra::{DMatrix, DVector};
use pgflow_core::solver::{minimize, FnObjective, Method, MinimizeSpec};
use proptest::prelude::*;

/// SPD matrix `QᵀDQ + I` from a seeded random square and diagonal.
fn spd(n: usize, entries: &[f64], diag: &[f64]) -> DMatrix<f64> {
    let q = DMatrix::from_fn(n, n, |i, j| entries[(i * n + j) % entries.len()]);
    let d = DMatrix::from_diagonal(&DVector::from_iterator(n, diag.iter().cycle().take(n).copied()));
    q.transpose() * d * q + DMatrix::identity(n, n)
}

fn quadratic(a: DMatrix<f64>, b: DVector<f64>) -> impl Fn(&[f64]) -> f64 {
    move |x| {
        let x = DVector::from_column_slice(x);
        0.5 * x.dot(&(&a * &x)) - b.dot(&x)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn iterates_descend(
        entries in prop::collection::vec(-1.0f64..1.0, 36),
        diag in prop::collection::vec(0.0f64..10.0, 6),
        start in prop::collection::vec(-5.0f64..5.0, 6),
        quartic in 0.0f64..1.0,
        gd in any::<bool>(),
    ) {
        let a = spd(6, &entries, &diag);
        let (a1, a2) = (a.clone(), a);
        let f = move |x: &[f64]| {
            let v = DVector::from_column_slice(x);
            0.5 * v.dot(&(&a1 * &v)) + 0.25 * quartic * x.iter().map(|t| t.powi(4)).sum::<f64>()
        };
        let g = move |x: &[f64]| {
            let v = DVector::from_column_slice(x);
            let mut out = (&a2 * &v).as_slice().to_vec();
            for (o, t) in out.iter_mut().zip(x) {
                *o += quartic * t.powi(3);
            }
            out
        };
        let obj = FnObjective::with_gradient(6, f, g);
        let mut spec = MinimizeSpec::new(start, 1e-9, 3000);
        if gd {
            spec.method = Method::GradientDescent;
        }
        let res = minimize(&obj, &spec).unwrap();
        for w in res.history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()), "{} -> {}", w[0], w[1]);
        }
        prop_assert!(res.value <= res.history[0]);
    }

    #[test]
    fn quadratics_converge_within_ten_times_dimension(
        n in 1usize..=100,
        entries in prop::collection::vec(-1.0f64..1.0, 64),
        diag in prop::collection::vec(0.0f64..4.0, 8),
        rhs in prop::collection::vec(-3.0f64..3.0, 100),
    ) {
        let a = spd(n, &entries, &diag);
        let b = DVector::from_iterator(n, rhs.iter().take(n).copied());
        let (ag, bg) = (a.clone(), b.clone());
        let obj = FnObjective::with_gradient(n, quadratic(a.clone(), b.clone()), move |x: &[f64]| {
            (&ag * DVector::from_column_slice(x) - &bg).as_slice().to_vec()
        });
        let res = minimize(&obj, &MinimizeSpec::new(vec![0.0; n], 1e-10, 10 * n)).unwrap();
        prop_assert!(res.converged && res.grad_norm <= 1e-10, "n = {} grad {}", n, res.grad_norm);
        let exact = a.lu().solve(&b).unwrap();
        let err = (DVector::from_column_slice(&res.argmin) - exact).amax();
        prop_assert!(err < 1e-9);
    }

    #[test]
    fn minimizer_is_translation_equivariant(
        shift in prop::collection::vec(-10.0f64..10.0, 4),
        entries in prop::collection::vec(-1.0f64..1.0, 16),
        diag in prop::collection::vec(0.0f64..3.0, 4),
    ) {
        let a = spd(4, &entries, &diag);
        let f = |x: &[f64], a: &DMatrix<f64>| {
            let v = DVector::from_column_slice(x);
            0.5 * v.dot(&(a * &v)) + x.iter().map(|t| (1.0 + t * t).sqrt()).sum::<f64>() - x[0]
        };
        let g = |x: &[f64], a: &DMatrix<f64>| {
            let mut out = (a * DVector::from_column_slice(x)).as_slice().to_vec();
            for (o, t) in out.iter_mut().zip(x) {
                *o += t / (1.0 + t * t).sqrt();
            }
            out[0] -= 1.0;
            out
        };
        let (a1, a2, a3, a4) = (a.clone(), a.clone(), a.clone(), a);
        let (s1, s2) = (shift.clone(), shift.clone());
        let back = |x: &[f64], s: &[f64]| -> Vec<f64> { x.iter().zip(s).map(|(a, b)| a - b).collect() };
        let base = FnObjective::with_gradient(4, move |x: &[f64]| f(x, &a1), move |x: &[f64]| g(x, &a2));
        let moved = FnObjective::with_gradient(
            4,
            move |x: &[f64]| f(&back(x, &s1), &a3),
            move |x: &[f64]| g(&back(x, &s2), &a4),
        );
        let r0 = minimize(&base, &MinimizeSpec::new(vec![0.0; 4], 1e-11, 2000)).unwrap();
        let r1 = minimize(&moved, &MinimizeSpec::new(shift.clone(), 1e-11, 2000)).unwrap();
        for i in 0..4 {
            prop_assert!((r1.argmin[i] - (r0.argmin[i] + shift[i])).abs() < 1e-6);
        }
    }
}
