use serde::Serialize;

use crate::engine::Trajectory;
use crate::vecops::sub;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiminfRow {
    pub eps: f64,
    pub coarse_steps: usize,
    pub coarse_tau: f64,
    /// `Σ τ Ψ^ε_{U^{n-1}}(V^n)` on the fine grid.
    pub fine_primal: f64,
    /// `Σ τ̄ Ψ^ε(ΔU/τ̄)` after piecewise-affine reinterpolation at `τ̄`.
    pub coarse_primal: f64,
    /// The same for the effective trajectory with `Ψ⁰`.
    pub effective_coarse: f64,
    /// `|effective_coarse - coarse_primal|`.
    pub slack: f64,
    pub jensen_violations: usize,
    /// Largest `Ψ(mean slope)·τ̄ - Σ τ Ψ(slopes)` over the coarse intervals.
    pub jensen_worst: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiminfReport {
    pub interval: (f64, f64),
    pub rows: Vec<LiminfRow>,
    pub jensen_violations: usize,
}

impl LiminfReport {
    /// Slack strictly decreasing along the ε sequence at the given `τ̄`.
    pub fn slack_decreasing_at(&self, coarse_steps: usize) -> bool {
        let s: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.coarse_steps == coarse_steps)
            .map(|r| r.slack)
            .collect();
        s.len() >= 2 && s.windows(2).all(|w| w[1] < w[0])
    }
}

/// Per coarse interval of a trajectory with `window` fine steps: the coarse
/// dissipation `τ̄Ψ_{U(t_m)}(mean slope)`, the fine sum `Σ τΨ_{U(t_m)}(V^n)`
/// with the same base (the two sides of Jensen's inequality), and the worst
/// Jensen defect.
fn coarse_dissipation(traj: &Trajectory, window: usize) -> (f64, usize, f64) {
    let sys = traj.system.as_ref();
    let n = traj.steps();
    let coarse_tau = window as f64 * traj.tau;
    let (mut total, mut violations, mut worst) = (0.0, 0, f64::NEG_INFINITY);
    for m in 0..n / window {
        let (a, b) = (m * window, (m + 1) * window);
        let base = &traj.nodes[a];
        let slope: Vec<f64> = sub(&traj.nodes[b], base).iter().map(|x| x / coarse_tau).collect();
        let coarse = coarse_tau * sys.dissipation(base, &slope);
        let fine: f64 = (a + 1..=b).map(|k| traj.tau * sys.dissipation(base, &traj.velocity(k))).sum();
        let defect = coarse - fine;
        if defect > 1e-12 * (1.0 + fine.abs()) {
            violations += 1;
        }
        worst = worst.max(defect);
        total += coarse;
    }
    (total, violations, worst)
}

/// Liminf estimate for the primal dissipation along an ε sequence, evaluated
/// through piecewise-affine reinterpolation at the coarse steps
/// `horizon / coarse_steps` (each must divide the fine step count).
pub fn liminf_witness(eps_trajs: &[(f64, &Trajectory)], effective: &Trajectory, coarse_steps: &[usize]) -> LiminfReport {
    let n = effective.steps();
    let mut rows = Vec::new();
    let mut jensen_violations = 0;
    for &cs in coarse_steps {
        if cs == 0 || n % cs != 0 {
            log::warn!("coarse step count {cs} does not divide {n}; skipped");
            continue;
        }
        let window = n / cs;
        let (eff_coarse, v0, _) = coarse_dissipation(effective, window);
        jensen_violations += v0;
        for &(eps, tr) in eps_trajs {
            if tr.steps() != n {
                log::warn!("trajectory for eps = {eps} has {} steps, expected {n}; skipped", tr.steps());
                continue;
            }
            let (coarse, v, worst) = coarse_dissipation(tr, window);
            let fine: f64 = (1..=n)
                .map(|k| tr.tau * tr.system.dissipation(&tr.nodes[k - 1], &tr.velocity(k)))
                .sum();
            jensen_violations += v;
            rows.push(LiminfRow {
                eps,
                coarse_steps: cs,
                coarse_tau: window as f64 * tr.tau,
                fine_primal: fine,
                coarse_primal: coarse,
                effective_coarse: eff_coarse,
                slack: (eff_coarse - coarse).abs(),
                jensen_violations: v,
                jensen_worst: worst,
            });
        }
    }
    LiminfReport {
        interval: (effective.t0(), effective.horizon()),
        rows,
        jensen_violations,
    }
}
