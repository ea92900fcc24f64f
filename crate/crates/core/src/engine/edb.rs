use serde::Serialize;

use super::interp::de_giorgi_interpolant;
use super::scheme::Trajectory;
use super::EngineError;
use crate::quadrature::{gauss_legendre_composite, log_graded_rule};
use crate::vecops::{dot, sub};

#[derive(Debug, Clone, Copy)]
pub struct EdbOptions {
    /// Panels per interval. The De Giorgi integrals use a six-point rule
    /// graded towards the left node; the balance integrals two-point Gauss.
    pub substeps: usize,
    /// Recompute the De Giorgi integrals with doubled substeps and fail when
    /// they move by more than ten times the interval budget.
    pub check_resolution: bool,
}

impl Default for EdbOptions {
    fn default() -> Self {
        EdbOptions {
            substeps: 8,
            check_resolution: true,
        }
    }
}

/// Terms of the discrete upper energy estimate on `(t_{n-1}, t_n]`
///
/// `E_{t_n}(U^n) + τΨ_{U^{n-1}}(V^n) + ∫Ψ*_{U^{n-1}}(w_n - ξ̃) <= E_{t_{n-1}}(U^{n-1}) + ∫∂_rE_r(Ũ) + <w_n, U^n - U^{n-1}>`
///
/// and of the continuous balance evaluated on `Ū_τ` and `Û_τ'`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalReport {
    pub n: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub energy_start: f64,
    pub energy_end: f64,
    pub dissipation_primal: f64,
    pub dissipation_dual: f64,
    pub power_integral: f64,
    pub perturbation_work: f64,
    pub duee_lhs: f64,
    pub duee_rhs: f64,
    pub duee_slack: f64,
    /// Solver tolerance budget `1e-8 (1 + |E_{n-1}| + |E_n|)`.
    pub budget: f64,
    /// Signed balance defect on this interval.
    pub edb_defect: f64,
    pub de_giorgi_iters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdbReport {
    pub interval: (f64, f64),
    pub dissipation_primal: f64,
    pub dissipation_dual: f64,
    pub energy_start: f64,
    pub energy_end: f64,
    pub power_integral: f64,
    pub perturbation_work: f64,
    pub duee_lhs: f64,
    pub duee_rhs: f64,
    pub duee_slack: f64,
    /// Smallest `slack_n / budget_n` over the intervals.
    pub worst_relative_slack: f64,
    pub budget: f64,
    /// `|lhs - rhs|` of the continuous balance over the whole interval.
    pub edb_residual: f64,
    pub intervals: Vec<IntervalReport>,
}

impl EdbReport {
    /// Intervals with `slack < -factor * budget`.
    pub fn duee_violations(&self, factor: f64) -> usize {
        self.intervals
            .iter()
            .filter(|r| r.duee_slack < -factor * r.budget)
            .count()
    }

    /// Running `|Σ defect|` at each interval end.
    pub fn cumulative_residuals(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.intervals
            .iter()
            .map(|r| {
                acc += r.edb_defect;
                acc.abs()
            })
            .collect()
    }
}

const DG_POINTS: usize = 6;
const DG_DEPTH: f64 = 20.0;

struct DeGiorgiIntegrals {
    dual: f64,
    power: f64,
    iters: usize,
}

fn de_giorgi_integrals(traj: &Trajectory, n: usize, panels: usize) -> Result<DeGiorgiIntegrals, EngineError> {
    let sys = traj.system.as_ref();
    let t_prev = traj.times[n - 1];
    let base = &traj.nodes[n - 1];
    let w = &traj.applied[n - 1];
    let mut out = DeGiorgiIntegrals {
        dual: 0.0,
        power: 0.0,
        iters: 0,
    };
    for (r, wt) in log_graded_rule(0.0, traj.tau, panels, DG_POINTS, DG_DEPTH) {
        let s = t_prev + r;
        let dg = de_giorgi_interpolant(traj, s)?;
        out.dual += wt * sys.dissipation_conj(base, &sub(w, &dg.xi));
        if !sys.is_autonomous() {
            out.power += wt * sys.power(s, &dg.next);
        }
        out.iters += dg.iters;
    }
    Ok(out)
}

fn balance_defect(traj: &Trajectory, n: usize, panels: usize) -> f64 {
    let sys = traj.system.as_ref();
    let un = &traj.nodes[n];
    let xi = &traj.duals[n];
    let v = traj.velocity(n);
    let psi = sys.dissipation(un, &v);
    let mut integral = 0.0;
    for (r, wt) in gauss_legendre_composite(traj.times[n - 1], traj.times[n], panels) {
        let b = sys.perturbation(r, un);
        let conj = sys.dissipation_conj(un, &sub(&b, xi));
        integral += wt * (psi + conj - sys.power(r, un) - dot(&b, &v));
    }
    traj.energies[n] - traj.energies[n - 1] + integral
}

/// Energy-dissipation diagnostics on `[t̄(s), t̄(t)]`, where `t̄` rounds up to
/// the next node.
pub fn edb_report(traj: &Trajectory, s: f64, t: f64, opts: &EdbOptions) -> Result<EdbReport, EngineError> {
    if !(s < t) {
        return Err(EngineError::InvalidStep(format!("need s < t, got s = {s}, t = {t}")));
    }
    let k_of = |x: f64| -> Result<usize, EngineError> {
        match traj.node_index(x) {
            Some(k) => Ok(k),
            None => traj.interval_of(x),
        }
    };
    let (ks, kt) = (k_of(s)?, k_of(t)?);
    let sys = traj.system.as_ref();
    let panels = opts.substeps.max(1);
    let mut intervals = Vec::with_capacity(kt.saturating_sub(ks));
    for n in ks + 1..=kt {
        let base = &traj.nodes[n - 1];
        let v = traj.velocity(n);
        let primal = traj.tau * sys.dissipation(base, &v);
        let dg = de_giorgi_integrals(traj, n, panels)?;
        let (e0, e1) = (traj.energies[n - 1], traj.energies[n]);
        let budget = 1e-8 * (1.0 + e0.abs() + e1.abs());
        if opts.check_resolution {
            let fine = de_giorgi_integrals(traj, n, 2 * panels)?;
            let change = (fine.dual - dg.dual).abs().max((fine.power - dg.power).abs());
            if change > 10.0 * budget {
                return Err(EngineError::QuadratureUnderResolved {
                    interval: n,
                    change,
                    tol: 10.0 * budget,
                });
            }
        }
        let work = dot(&traj.applied[n - 1], &sub(&traj.nodes[n], base));
        let lhs = e1 + primal + dg.dual;
        let rhs = e0 + dg.power + work;
        intervals.push(IntervalReport {
            n,
            t_start: traj.times[n - 1],
            t_end: traj.times[n],
            energy_start: e0,
            energy_end: e1,
            dissipation_primal: primal,
            dissipation_dual: dg.dual,
            power_integral: dg.power,
            perturbation_work: work,
            duee_lhs: lhs,
            duee_rhs: rhs,
            duee_slack: rhs - lhs,
            budget,
            edb_defect: balance_defect(traj, n, panels),
            de_giorgi_iters: dg.iters,
        });
    }
    let sum = |f: fn(&IntervalReport) -> f64| intervals.iter().map(f).sum::<f64>();
    let worst_relative_slack = intervals
        .iter()
        .map(|r| r.duee_slack / r.budget)
        .fold(f64::INFINITY, f64::min);
    Ok(EdbReport {
        interval: (traj.times[ks], traj.times[kt]),
        dissipation_primal: sum(|r| r.dissipation_primal),
        dissipation_dual: sum(|r| r.dissipation_dual),
        energy_start: traj.energies[ks],
        energy_end: traj.energies[kt],
        power_integral: sum(|r| r.power_integral),
        perturbation_work: sum(|r| r.perturbation_work),
        duee_lhs: sum(|r| r.duee_lhs),
        duee_rhs: sum(|r| r.duee_rhs),
        duee_slack: sum(|r| r.duee_slack),
        worst_relative_slack,
        budget: sum(|r| r.budget),
        edb_residual: sum(|r| r.edb_defect).abs(),
        intervals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run_scheme, SchemeOptions};
    use crate::model::build_system;

    #[test]
    fn quadratic_duee_is_sharp() {
        let tr = run_scheme(build_system("decay").unwrap(), &[1.0], 0.0, 1.0, 8, &SchemeOptions::default()).unwrap();
        let rep = edb_report(&tr, 0.0, 1.0, &EdbOptions::default()).unwrap();
        for r in &rep.intervals {
            assert!(r.duee_slack >= -1e-8, "{r:?}");
            assert!(r.duee_slack.abs() < 1e-9);
            assert!(r.dissipation_primal >= 0.0 && r.dissipation_dual >= 0.0);
        }
    }

    #[test]
    fn balance_defect_closed_form() {
        // u' = -u: per-interval defect is -½τ²(V^n)²
        let n = 16;
        let tr = run_scheme(build_system("decay").unwrap(), &[1.0], 0.0, 1.0, n, &SchemeOptions::default()).unwrap();
        let rep = edb_report(&tr, 0.0, 1.0, &EdbOptions::default()).unwrap();
        let tau = 1.0 / n as f64;
        for r in &rep.intervals {
            let v = tr.velocity(r.n)[0];
            assert!((r.edb_defect + 0.5 * tau * tau * v * v).abs() < 1e-9);
        }
    }

    #[test]
    fn work_telescopes_for_unit_forcing() {
        let tr = run_scheme(build_system("forced-decay").unwrap(), &[0.0], 0.0, 1.0, 8, &SchemeOptions::default())
            .unwrap();
        let rep = edb_report(&tr, 0.25, 1.0, &EdbOptions::default()).unwrap();
        let (a, b) = (tr.affine(0.25).unwrap()[0], tr.affine(1.0).unwrap()[0]);
        assert!((rep.perturbation_work - (b - a)).abs() < 1e-14);
    }
}
