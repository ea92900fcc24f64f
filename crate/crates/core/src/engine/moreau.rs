use serde::Serialize;

use super::scheme::GronwallConstants;
use super::step::{solve_step, StepProblem};
use super::EngineError;
use crate::quadrature::extrapolate_to_zero;
use crate::solver::SolverSettings;
use crate::vecops::dot;

#[derive(Debug, Clone, Copy)]
pub struct MoreauOptions {
    pub solver: SolverSettings,
    /// Horizon `T` entering the drift bound.
    pub horizon: f64,
    /// Needed for non-autonomous systems; ignored otherwise.
    pub constants: Option<GronwallConstants>,
}

impl Default for MoreauOptions {
    fn default() -> Self {
        MoreauOptions {
            solver: SolverSettings::default(),
            horizon: 1.0,
            constants: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MoreauRow {
    pub r: f64,
    /// `Φ_{r,t}(w;u) = min_v Φ(r,t,u,w;v)`.
    pub value: f64,
    /// `E_{t+r}(u) - <w,u>`.
    pub upper_bound: f64,
    /// Fenchel-Young gap of the minimizer.
    pub certificate: f64,
    /// Positive when monotonicity or the upper bound fails on this row.
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MoreauTable {
    pub t: f64,
    pub rows: Vec<MoreauRow>,
    /// Allowed growth rate of the envelope (zero for autonomous systems).
    pub drift_rate: f64,
    /// `E_t(u) - <w,u>`, the `r -> 0` limit.
    pub limit_target: f64,
}

impl MoreauTable {
    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| r.violation > 0.0).count()
    }

    /// Polynomial extrapolation to `r = 0` from the (up to) four smallest `r`.
    pub fn limit_extrapolated(&self) -> f64 {
        let mut rows: Vec<&MoreauRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| a.r.total_cmp(&b.r));
        let take = rows.len().min(4);
        let xs: Vec<f64> = rows[..take].iter().map(|r| r.r).collect();
        let ys: Vec<f64> = rows[..take].iter().map(|r| r.value).collect();
        extrapolate_to_zero(&xs, &ys)
    }
}

/// Envelope values `Φ_{r,t}(w;u)` for increasing `r`, checked against the
/// upper bound `E_{t+r}(u) - <w,u>` and against the drift-corrected
/// monotonicity `Φ_{r2} - Φ_{r1} <= (r2 - r1) C C₁ (G(u) + T Ψ*_u(w))`, with
/// `C₁ = e^{CT}` and `G(u) = C₁ E_t(u)`.
pub fn moreau_yosida_scan(
    p: &StepProblem<'_>,
    r_values: &[f64],
    opts: &MoreauOptions,
) -> Result<MoreauTable, EngineError> {
    if r_values.is_empty() || r_values.iter().any(|r| !(*r > 0.0)) {
        return Err(EngineError::InvalidStep("r values must be positive".into()));
    }
    if r_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(EngineError::InvalidStep("r values must be strictly increasing".into()));
    }
    let sys = p.system;
    let drift_rate = if sys.is_autonomous() {
        0.0
    } else {
        let c = opts
            .constants
            .ok_or_else(|| EngineError::InvalidStep("non-autonomous scan needs Gronwall constants".into()))?;
        let c1 = (c.c_power * opts.horizon).exp();
        let g = c1 * sys.energy(p.t, p.u);
        c.c_power * c1 * (g + opts.horizon * sys.dissipation_conj(p.u, p.w))
    };
    let wu = dot(p.w, p.u);
    let mut rows: Vec<MoreauRow> = Vec::with_capacity(r_values.len());
    for &r in r_values {
        let q = StepProblem { r, ..*p };
        let sol = solve_step(&q, &opts.solver)?;
        let upper = sys.energy(p.t + r, p.u) - wu;
        let tol = 1e-8 * (1.0 + sol.value.abs());
        let mut violation = sol.value - upper - tol;
        if let Some(prev) = rows.last() {
            let allowed = (r - prev.r) * drift_rate;
            violation = violation.max(sol.value - prev.value - allowed - tol);
        }
        rows.push(MoreauRow {
            r,
            value: sol.value,
            upper_bound: upper,
            certificate: sol.fy_gap,
            violation,
        });
    }
    Ok(MoreauTable {
        t: p.t,
        rows,
        drift_rate,
        limit_target: sys.energy(p.t, p.u) - wu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_system;

    #[test]
    fn quadratic_envelope_closed_form() {
        let sys = build_system("decay").unwrap();
        let u = [1.0];
        let w = [0.0];
        let p = StepProblem::new(sys.as_ref(), 1.0, 0.0, &u, &w);
        let rs: Vec<f64> = (0..8).rev().map(|k| 0.5_f64.powi(k)).collect();
        let tab = moreau_yosida_scan(&p, &rs, &MoreauOptions::default()).unwrap();
        for row in &tab.rows {
            assert!((row.value - 1.0 / (2.0 * (1.0 + row.r))).abs() < 1e-10);
            assert!(row.value <= row.upper_bound);
        }
        assert_eq!(tab.violations(), 0);
        assert!((tab.limit_extrapolated() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn increasing_envelope_is_flagged() {
        let sys = build_system("decay").unwrap();
        let p = StepProblem::new(sys.as_ref(), 1.0, 0.0, &[1.0], &[0.0]);
        assert!(moreau_yosida_scan(&p, &[0.5, 0.25], &MoreauOptions::default()).is_err());
    }
}
