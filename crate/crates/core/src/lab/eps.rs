use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use super::{check_params, dissipation_integrals, ConvergenceTable, LabError, Metric};
use crate::engine::{run_scheme, SchemeOptions, Trajectory};
use crate::homog::{cell_closed_form, solve_cell_problem, CellOptions, EffectiveCoefficients, EffectiveOptions};
use crate::model::GradientSystem;
use crate::rds::{assemble_system, CellCoefficients, Grid, RdsSystem};
use crate::vecops::sub;

/// How the spatial grid follows `ε`. The reference effective run uses the
/// finest grid of the sweep; coarser grids must nest into it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridRule {
    /// `cells = ceil(m / ε)` for each `ε`.
    PerPeriod(usize),
    /// `cells = ceil(m / min ε)` for every `ε`.
    Uniform(usize),
    Fixed(usize),
}

/// Initial data `u⁰(x) = sin²(πx)`, optionally with the cell corrector
/// `u⁰_ε = u⁰ + εφ(x/ε; u⁰, ∂_x u⁰)` so that the ε-energies converge too.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialData {
    Plain,
    CorrectorAdjusted,
}

#[derive(Clone)]
pub struct EpsSweepPlan {
    pub eps_list: Vec<f64>,
    pub horizon: f64,
    pub steps: usize,
    pub grid_rule: GridRule,
    /// Minimum cells per period; the sweep fails below it.
    pub per_period: usize,
    pub initial: InitialData,
    pub effective: EffectiveOptions,
    pub scheme: SchemeOptions,
    pub metrics: Vec<Metric>,
}

impl Default for EpsSweepPlan {
    fn default() -> Self {
        EpsSweepPlan {
            eps_list: vec![0.25, 0.125, 0.0625],
            horizon: 0.25,
            steps: 64,
            grid_rule: GridRule::Uniform(16),
            per_period: 16,
            initial: InitialData::Plain,
            effective: EffectiveOptions::default(),
            scheme: SchemeOptions::default(),
            metrics: Metric::ALL.to_vec(),
        }
    }
}

pub struct EpsRun {
    pub eps: f64,
    pub grid: Grid,
    pub eps_traj: Trajectory,
    /// `|E^ε(u⁰_ε) - E⁰(u⁰)|`.
    pub initial_energy_gap: f64,
}

pub struct EpsSweep {
    pub table: ConvergenceTable,
    pub runs: Vec<EpsRun>,
    /// The effective run on the finest grid every row is compared against.
    pub reference: Trajectory,
}

fn profile(x: f64) -> f64 {
    (PI * x).sin().powi(2)
}

fn profile_slope(x: f64) -> f64 {
    PI * (2.0 * PI * x).sin()
}

fn periodic_lerp(values: &[f64], y: f64) -> f64 {
    let n = values.len();
    let s = y.rem_euclid(1.0) * n as f64;
    let k = (s.floor() as usize).min(n - 1);
    let t = s - k as f64;
    (1.0 - t) * values[k] + t * values[(k + 1) % n]
}

fn initial_state(
    c: &dyn CellCoefficients,
    grid: Grid,
    eps: f64,
    rule: InitialData,
    resolution: usize,
) -> Result<Vec<f64>, LabError> {
    let base = grid.sample(profile);
    if rule == InitialData::Plain || !c.y_dependence().energy {
        return Ok(base);
    }
    let opts = CellOptions {
        resolution,
        ..CellOptions::default()
    };
    let mut out = base.clone();
    for (i, u) in out.iter_mut().enumerate() {
        let x = grid.node(i);
        let (u0, g0) = (base[i], profile_slope(x));
        let cell = match cell_closed_form(c, &[u0], &[g0], resolution)? {
            Some(p) => p,
            None => solve_cell_problem(c, &[u0], &[g0], &opts)?,
        };
        *u += eps * periodic_lerp(&cell.corrector, x / eps);
    }
    Ok(out)
}

fn grid_for(plan: &EpsSweepPlan, eps: f64) -> Result<Grid, LabError> {
    let eps_min = plan.eps_list.iter().copied().fold(f64::INFINITY, f64::min);
    let cells = match plan.grid_rule {
        GridRule::PerPeriod(m) => (m as f64 / eps - 1e-9).ceil() as usize,
        GridRule::Uniform(m) => (m as f64 / eps_min - 1e-9).ceil() as usize,
        GridRule::Fixed(n) => n,
    };
    let grid = Grid::new(cells)?;
    if grid.h > eps / plan.per_period as f64 * (1.0 + 1e-12) {
        return Err(LabError::ResolutionRuleViolated {
            eps,
            h: grid.h,
            per_period: plan.per_period,
        });
    }
    Ok(grid)
}

/// Largest change, over the coarse windows of `window` steps and the test
/// functions `cos(kπx)` (`k = 0..=3`), of `<ΔU_ε - ΔU_0, φ_k>`.
fn weak_derivative_gap(a: &[Vec<f64>], b: &[Vec<f64>], grid: Grid, window: usize) -> f64 {
    let tests: Vec<Vec<f64>> = (0..=3)
        .map(|k| (0..grid.nodes()).map(|i| grid.weight(i) * (k as f64 * PI * grid.node(i)).cos()).collect())
        .collect();
    let mut worst: f64 = 0.0;
    let n = a.len() - 1;
    let mut m0 = 0;
    while m0 < n {
        let m1 = (m0 + window).min(n);
        let d = sub(&sub(&a[m1], &a[m0]), &sub(&b[m1], &b[m0]));
        for t in &tests {
            worst = worst.max(t.iter().zip(&d).map(|(w, x)| w * x).sum::<f64>().abs());
        }
        m0 = m1;
    }
    worst
}

fn restrict(nodes: &[Vec<f64>], stride: usize) -> Vec<Vec<f64>> {
    nodes.iter().map(|u| u.iter().step_by(stride).copied().collect()).collect()
}

/// Solve the ε-system for every `ε` and compare with one effective run on
/// the finest grid of the sweep (same `τ`); coarser ε-grids are compared at
/// their own nodes.
pub fn run_eps_sweep(coeffs: Arc<dyn CellCoefficients>, plan: &EpsSweepPlan) -> Result<EpsSweep, LabError> {
    check_params(&plan.eps_list, "eps")?;
    if plan.per_period < 8 {
        return Err(LabError::InvalidPlan("per_period must be at least 8".into()));
    }
    if coeffs.components() != 1 {
        return Err(LabError::InvalidPlan("eps sweeps support scalar instances only".into()));
    }
    let grids = plan
        .eps_list
        .iter()
        .map(|&eps| grid_for(plan, eps))
        .collect::<Result<Vec<_>, _>>()?;
    let ref_grid = *grids.iter().max_by_key(|g| g.cells).expect("at least three grids");
    if let Some(g) = grids.iter().find(|g| ref_grid.cells % g.cells != 0) {
        return Err(LabError::InvalidPlan(format!(
            "grid with {} cells does not nest into the reference grid with {} cells",
            g.cells, ref_grid.cells
        )));
    }
    let eff: Arc<dyn CellCoefficients> = Arc::new(EffectiveCoefficients::new(coeffs.clone(), plan.effective)?);
    let eff_sys: Arc<RdsSystem> = Arc::new(assemble_system(eff, 1.0, ref_grid)?.with_name("effective"));
    let u_ref0 = ref_grid.sample(profile);
    let reference = run_scheme(eff_sys.clone(), &u_ref0, 0.0, plan.horizon, plan.steps, &plan.scheme)?;
    let (ref_primal, ref_dual) = dissipation_integrals(&reference);
    let ref_e0 = eff_sys.energy(0.0, &u_ref0);

    let mut runs = Vec::with_capacity(grids.len());
    let mut values = Vec::with_capacity(grids.len());
    for (&eps, &grid) in plan.eps_list.iter().zip(&grids) {
        let eps_sys = Arc::new(assemble_system(coeffs.clone(), eps, grid)?.with_name(&format!("eps={eps}")));
        let u_eps = initial_state(coeffs.as_ref(), grid, eps, plan.initial, plan.per_period)?;
        let initial_energy_gap = (eps_sys.energy(0.0, &u_eps) - ref_e0).abs();
        let a = run_scheme(eps_sys.clone(), &u_eps, 0.0, plan.horizon, plan.steps, &plan.scheme)?;
        let b = restrict(&reference.nodes, ref_grid.cells / grid.cells);
        let mut m = BTreeMap::new();
        for metric in &plan.metrics {
            let v = match metric {
                Metric::SupState => (0..=plan.steps)
                    .map(|k| eps_sys.state_norm(&sub(&a.nodes[k], &b[k])))
                    .fold(0.0, f64::max),
                Metric::EnergyPointwise => a
                    .energies
                    .iter()
                    .zip(&reference.energies)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max),
                Metric::PrimalDissipation => (dissipation_integrals(&a).0 - ref_primal).abs(),
                Metric::DualDissipation => (dissipation_integrals(&a).1 - ref_dual).abs(),
                Metric::DerivativeWeak => weak_derivative_gap(&a.nodes, &b, grid, (plan.steps / 8).max(1)),
            };
            m.insert(metric.name().to_string(), v);
        }
        m.insert("initial_energy_gap".to_string(), initial_energy_gap);
        log::info!("eps = {eps}: {m:?}");
        values.push(m);
        runs.push(EpsRun {
            eps,
            grid,
            eps_traj: a,
            initial_energy_gap,
        });
    }
    Ok(EpsSweep {
        table: ConvergenceTable::new(
            "eps",
            format!(
                "{} on {} cells, tau = {}",
                eff_sys.name(),
                ref_grid.cells,
                reference.tau
            ),
            &plan.eps_list,
            values,
        ),
        runs,
        reference,
    })
}
