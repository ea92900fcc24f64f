use std::collections::BTreeMap;
use std::sync::Arc;

use super::{check_params, dissipation_integrals, ConvergenceTable, LabError};
use crate::engine::{edb_report, run_scheme, EdbOptions, SchemeOptions, Trajectory};
use crate::model::GradientSystem;
use crate::vecops::sub;

pub type ExactSolution = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

#[derive(Clone, Default)]
pub struct TauSweepOptions {
    pub scheme: SchemeOptions,
    pub t0: f64,
    /// Adds the EDB residual column when set.
    pub edb: Option<EdbOptions>,
    /// Reference for the state metric; the finest run otherwise.
    pub exact: Option<ExactSolution>,
}

pub struct TauSweep {
    pub table: ConvergenceTable,
    pub trajectories: Vec<Trajectory>,
    /// `E_{t_n}(U^n)` nonincreasing (up to `1e-12` relative) on each run.
    pub energy_monotone: Vec<bool>,
}

fn steps_for(horizon: f64, tau: f64) -> Result<usize, LabError> {
    let n = (horizon / tau).round();
    if n < 1.0 || (n * tau - horizon).abs() > 1e-9 * horizon {
        return Err(LabError::InvalidPlan(format!("tau = {tau} does not divide the horizon {horizon}")));
    }
    Ok(n as usize)
}

/// Run the scheme for every `τ` and compare against the finest run (or the
/// exact solution): sup-distance at the nodes, dissipation integrals and,
/// optionally, EDB residuals.
pub fn run_tau_sweep(
    sys: Arc<dyn GradientSystem>,
    u0: &[f64],
    horizon: f64,
    tau_list: &[f64],
    opts: &TauSweepOptions,
) -> Result<TauSweep, LabError> {
    check_params(tau_list, "tau")?;
    let trajectories = tau_list
        .iter()
        .map(|&tau| {
            let steps = steps_for(horizon, tau)?;
            Ok(run_scheme(sys.clone(), u0, opts.t0, horizon, steps, &opts.scheme)?)
        })
        .collect::<Result<Vec<_>, LabError>>()?;
    let finest = trajectories
        .iter()
        .min_by(|a, b| a.tau.total_cmp(&b.tau))
        .expect("at least three runs");
    let (ref_primal, ref_dual) = dissipation_integrals(finest);
    let mut values = Vec::with_capacity(trajectories.len());
    let mut energy_monotone = Vec::with_capacity(trajectories.len());
    for tr in &trajectories {
        let mut sup: f64 = 0.0;
        for (k, t) in tr.times.iter().enumerate() {
            let reference = match &opts.exact {
                Some(f) => f(*t),
                None => finest.affine(*t)?,
            };
            sup = sup.max(sys.state_norm(&sub(&tr.nodes[k], &reference)));
        }
        let (primal, dual) = dissipation_integrals(tr);
        let mut m = BTreeMap::new();
        m.insert("sup_state".to_string(), sup);
        m.insert("primal_dissipation".to_string(), (primal - ref_primal).abs());
        m.insert("dual_dissipation".to_string(), (dual - ref_dual).abs());
        if let Some(e) = &opts.edb {
            let rep = edb_report(tr, tr.t0(), tr.horizon(), e)?;
            m.insert("edb_residual".to_string(), rep.edb_residual);
        }
        values.push(m);
        energy_monotone.push(
            tr.energies
                .windows(2)
                .all(|w| w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs())),
        );
    }
    let reference = match opts.exact {
        Some(_) => format!("exact solution (states); tau = {} (dissipation integrals)", finest.tau),
        None => format!("finest run, tau = {}", finest.tau),
    };
    Ok(TauSweep {
        table: ConvergenceTable::new("tau", reference, tau_list, values),
        trajectories,
        energy_monotone,
    })
}
