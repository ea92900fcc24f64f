use nalgebra::DMatrix;
use serde::Serialize;

use super::HomogError;
use crate::quadrature::periodic_midpoints;
use crate::rds::CellCoefficients;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanTensors {
    /// `∫𝔸(y,u)dy`.
    pub aver: DMatrix<f64>,
    /// `(∫𝔸(y,u)^{-1}dy)^{-1}`.
    pub harm: DMatrix<f64>,
    /// Max entry change against the rule with half the points.
    pub error_estimate: f64,
}

fn rule(c: &dyn CellCoefficients, u: &[f64], n: usize) -> Result<(DMatrix<f64>, DMatrix<f64>), HomogError> {
    let i_c = c.components();
    let mut sum = DMatrix::zeros(i_c, i_c);
    let mut inv_sum = DMatrix::zeros(i_c, i_c);
    for y in periodic_midpoints(n) {
        let a = c.dissipation_tensor(y, u);
        let ev = a.symmetric_eigenvalues();
        let (lo, hi) = (ev.min(), ev.max());
        if !(lo > 1e-14 * hi.abs().max(1.0)) {
            return Err(HomogError::SingularInverse { y, min_eigenvalue: lo });
        }
        let inv = a.clone().try_inverse().ok_or(HomogError::SingularInverse {
            y,
            min_eigenvalue: lo,
        })?;
        sum += a;
        inv_sum += inv;
    }
    let w = 1.0 / n as f64;
    let harm = (inv_sum * w).try_inverse().ok_or(HomogError::SingularInverse {
        y: f64::NAN,
        min_eigenvalue: 0.0,
    })?;
    Ok((sum * w, harm))
}

/// Arithmetic and harmonic means of `𝔸(·,u)` by the periodic midpoint rule
/// with `quad_points` nodes.
pub fn mean_tensors(c: &dyn CellCoefficients, u: &[f64], quad_points: usize) -> Result<MeanTensors, HomogError> {
    if quad_points < 2 {
        return Err(HomogError::InvalidParameter(format!("quad_points = {quad_points} must be >= 2")));
    }
    let (aver, harm) = rule(c, u, quad_points)?;
    let (a2, h2) = rule(c, u, quad_points / 2)?;
    let scale = aver.amax().max(1.0);
    let error_estimate = (&aver - a2).amax().max((&harm - h2).amax()) + 1e-14 * scale;
    Ok(MeanTensors {
        aver,
        harm,
        error_estimate,
    })
}

/// `b_aver(t,u) = ∫𝔹(y,t,u)dy` by the periodic midpoint rule.
pub fn mean_forcing(c: &dyn CellCoefficients, t: f64, u: &[f64], quad_points: usize) -> Vec<f64> {
    let n = quad_points.max(1);
    let mut out = vec![0.0; c.components()];
    for y in periodic_midpoints(n) {
        for (o, b) in out.iter_mut().zip(c.forcing(y, t, u)) {
            *o += b / n as f64;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rds::{Oscillation, ScalarCoefficients};

    fn cosine_dissipation() -> ScalarCoefficients {
        ScalarCoefficients::oscillatory_dissipation()
    }

    #[test]
    fn cosine_means() {
        let m = mean_tensors(&cosine_dissipation(), &[0.3], 64).unwrap();
        assert!((m.aver[(0, 0)] - 2.0).abs() < 1e-12);
        // oracle: fine trapezoid sum of 1/(2 + cos 2πy)
        let n = 20_000;
        let inv: f64 = (0..n)
            .map(|k| 1.0 / (2.0 + (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos()))
            .sum::<f64>()
            / n as f64;
        assert!((m.harm[(0, 0)] - 1.0 / inv).abs() < 1e-8);
        assert!((m.harm[(0, 0)] - 3.0_f64.sqrt()).abs() < 1e-8);
        assert!(m.harm[(0, 0)] <= m.aver[(0, 0)]);
    }

    #[test]
    fn constant_tensor_means_coincide() {
        let m = mean_tensors(&ScalarCoefficients::heat(), &[1.0], 8).unwrap();
        assert_eq!(m.aver[(0, 0)], 1.0);
        assert!((m.harm[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn doubling_stays_within_estimate() {
        let c = cosine_dissipation();
        for n in [4, 8, 16] {
            let m = mean_tensors(&c, &[0.0], n).unwrap();
            let m2 = mean_tensors(&c, &[0.0], 2 * n).unwrap();
            let change = (&m.aver - &m2.aver).amax().max((&m.harm - &m2.harm).amax());
            assert!(change <= m.error_estimate, "n = {n}");
        }
    }

    #[test]
    fn degenerate_tensor_is_rejected() {
        let c = ScalarCoefficients {
            dissipation: Oscillation::cosine(1.0, 1.0),
            ..ScalarCoefficients::heat()
        };
        assert!(matches!(
            mean_tensors(&c, &[0.0], 3),
            Err(HomogError::SingularInverse { .. })
        ));
    }

    #[test]
    fn sine_forcing_averages_out() {
        let c = ScalarCoefficients {
            damping: 0.0,
            ..ScalarCoefficients::default_instance()
        };
        for t in [0.0, 0.4, 1.3] {
            assert!(mean_forcing(&c, t, &[0.7], 32)[0].abs() < 1e-15);
        }
    }
}
