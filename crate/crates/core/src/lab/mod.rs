//! Convergence experiments: τ-sweeps of the scheme, ε-sweeps against the
//! effective model, and the liminf/Jensen witness.

mod eps;
mod liminf;
mod tau;

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::engine::{EngineError, Trajectory};
use crate::homog::HomogError;
use crate::quadrature::loglog_slope;
use crate::rds::RdsError;
use crate::vecops::sub;

pub use eps::{run_eps_sweep, EpsRun, EpsSweep, EpsSweepPlan, GridRule, InitialData};
pub use liminf::{liminf_witness, LiminfReport, LiminfRow};
pub use tau::{run_tau_sweep, ExactSolution, TauSweep, TauSweepOptions};

#[derive(Debug, Error)]
pub enum LabError {
    #[error("resolution rule violated at eps = {eps}: h = {h} exceeds eps/{per_period}")]
    ResolutionRuleViolated { eps: f64, h: f64, per_period: usize },
    #[error("invalid sweep plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Homog(#[from] HomogError),
    #[error(transparent)]
    Rds(#[from] RdsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    SupState,
    EnergyPointwise,
    PrimalDissipation,
    DualDissipation,
    DerivativeWeak,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::SupState,
        Metric::EnergyPointwise,
        Metric::PrimalDissipation,
        Metric::DualDissipation,
        Metric::DerivativeWeak,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::SupState => "sup_state",
            Metric::EnergyPointwise => "energy_pointwise",
            Metric::PrimalDissipation => "primal_dissipation",
            Metric::DualDissipation => "dual_dissipation",
            Metric::DerivativeWeak => "derivative_weak",
        }
    }

    pub fn parse(s: &str) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub param: f64,
    pub metrics: BTreeMap<String, f64>,
    /// Ratio to the previous row (absent on the first).
    pub ratios: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub parameter: String,
    /// Description of the single run every row is compared against.
    pub reference: String,
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares log-log slopes of each metric against the parameter.
    pub empirical_orders: BTreeMap<String, Option<f64>>,
}

impl ConvergenceTable {
    fn new(parameter: &str, reference: String, params: &[f64], values: Vec<BTreeMap<String, f64>>) -> Self {
        let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(params.len());
        for (p, metrics) in params.iter().zip(values) {
            let ratios = match rows.last() {
                Some(prev) => metrics
                    .iter()
                    .filter_map(|(k, v)| prev.metrics.get(k).filter(|pv| **pv > 0.0).map(|pv| (k.clone(), v / pv)))
                    .collect(),
                None => BTreeMap::new(),
            };
            rows.push(ConvergenceRow {
                param: *p,
                metrics,
                ratios,
            });
        }
        let keys: Vec<String> = rows.first().map(|r| r.metrics.keys().cloned().collect()).unwrap_or_default();
        let empirical_orders = keys
            .into_iter()
            .map(|k| {
                let vals = rows.iter().map(|r| r.metrics[&k]).collect::<Vec<_>>();
                let slope = loglog_slope(params, &vals);
                (k, slope)
            })
            .collect();
        ConvergenceTable {
            parameter: parameter.into(),
            reference,
            rows,
            empirical_orders,
        }
    }

    pub fn column(&self, metric: &str) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.metrics.get(metric).copied()).collect()
    }

    /// Strict decrease along the rows.
    pub fn decreasing(&self, metric: &str) -> bool {
        let c = self.column(metric);
        c.len() >= 2 && c.windows(2).all(|w| w[1] < w[0])
    }

    /// No decrease along the rows.
    pub fn non_decreasing(&self, metric: &str) -> bool {
        let c = self.column(metric);
        c.len() >= 2 && c.windows(2).all(|w| w[1] >= w[0])
    }
}

pub(crate) fn check_params(values: &[f64], what: &str) -> Result<(), LabError> {
    if values.len() < 3 {
        return Err(LabError::InvalidPlan(format!("need at least 3 {what} values, got {}", values.len())));
    }
    let dec = values.windows(2).all(|w| w[1] < w[0]);
    let inc = values.windows(2).all(|w| w[1] > w[0]);
    if !(dec || inc) || values.iter().any(|v| !(*v > 0.0)) {
        return Err(LabError::InvalidPlan(format!("{what} values must be positive and strictly monotone")));
    }
    Ok(())
}

/// `(Σ τ Ψ_{U^{n-1}}(V^n), Σ τ Ψ*_{U^{n-1}}(w_n - ξ^n))` of a trajectory.
pub fn dissipation_integrals(traj: &Trajectory) -> (f64, f64) {
    let sys = traj.system.as_ref();
    let (mut primal, mut dual) = (0.0, 0.0);
    for n in 1..=traj.steps() {
        let base = &traj.nodes[n - 1];
        primal += traj.tau * sys.dissipation(base, &traj.velocity(n));
        dual += traj.tau * sys.dissipation_conj(base, &sub(&traj.applied[n - 1], &traj.duals[n]));
    }
    (primal, dual)
}
