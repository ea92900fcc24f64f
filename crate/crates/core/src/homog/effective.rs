use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::means::{mean_forcing, mean_tensors};
use super::table::{FhomTable, TableSpec};
use super::HomogError;
use crate::quadrature::periodic_midpoints;
use crate::rds::{assemble_system, CellCoefficients, Grid, Growth, RdsSystem, YDependence};

/// Mean of `𝔸` used as effective dissipation. `Harm` is a diagnostic
/// alternative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DissipationMode {
    Aver,
    Harm,
}

/// Effective energy density. `ArithmeticAverage` (`∫𝔽 dy`, no corrector)
/// is a diagnostic alternative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyMode {
    Homogenized,
    ArithmeticAverage,
}

#[derive(Debug, Clone, Copy)]
pub struct EffectiveOptions {
    pub dissipation: DissipationMode,
    pub energy: EnergyMode,
    pub quad_points: usize,
    pub table: TableSpec,
}

impl Default for EffectiveOptions {
    fn default() -> Self {
        EffectiveOptions {
            dissipation: DissipationMode::Aver,
            energy: EnergyMode::Homogenized,
            quad_points: 64,
            table: TableSpec::default(),
        }
    }
}

/// y-independent coefficients of the effective system. Oracles that do not
/// depend on `y` in the base coefficients are passed through unchanged.
pub struct EffectiveCoefficients {
    base: Arc<dyn CellCoefficients>,
    opts: EffectiveOptions,
    dep: YDependence,
    table: Option<FhomTable>,
    /// Precomputed tensor when `𝔸` does not depend on the state.
    tensor: Option<DMatrix<f64>>,
    /// `∫k dy` for densities `f0(u) + ½k(y)U²` in the averaged energy mode.
    mean_stiffness: Option<f64>,
}

impl std::fmt::Debug for EffectiveCoefficients {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EffectiveCoefficients")
            .field("dissipation", &self.opts.dissipation)
            .field("energy", &self.opts.energy)
            .field("dep", &self.dep)
            .finish()
    }
}

impl EffectiveCoefficients {
    pub fn new(base: Arc<dyn CellCoefficients>, opts: EffectiveOptions) -> Result<Self, HomogError> {
        let dep = base.y_dependence();
        let table = if dep.energy && opts.energy == EnergyMode::Homogenized {
            Some(FhomTable::build(base.as_ref(), &opts.table)?)
        } else {
            None
        };
        let mut eff = EffectiveCoefficients {
            base,
            opts,
            dep,
            table,
            tensor: None,
            mean_stiffness: None,
        };
        if eff.base.components() == 1 && eff.opts.energy == EnergyMode::ArithmeticAverage {
            let n = eff.opts.quad_points;
            let ks: Option<Vec<f64>> = periodic_midpoints(n)
                .map(|y| eff.base.quadratic_in_gradient(y, &[0.0]).map(|q| q.0))
                .collect();
            eff.mean_stiffness = ks.map(|k| k.iter().sum::<f64>() / n as f64);
        }
        if !eff.base.dissipation_depends_on_state() {
            eff.tensor = Some(eff.mean_tensor(&vec![0.0; eff.base.components()])?);
        }
        Ok(eff)
    }

    pub fn table(&self) -> Option<&FhomTable> {
        self.table.as_ref()
    }

    pub fn options(&self) -> &EffectiveOptions {
        &self.opts
    }

    fn mean_tensor(&self, u: &[f64]) -> Result<DMatrix<f64>, HomogError> {
        if !self.dep.dissipation {
            return Ok(self.base.dissipation_tensor(0.0, u));
        }
        let m = mean_tensors(self.base.as_ref(), u, self.opts.quad_points)?;
        Ok(match self.opts.dissipation {
            DissipationMode::Aver => m.aver,
            DissipationMode::Harm => m.harm,
        })
    }

    fn averaged_density(&self, u: &[f64], grad: &[f64]) -> f64 {
        if let (Some(k), Some((_, f0))) = (self.mean_stiffness, self.base.quadratic_in_gradient(0.0, u)) {
            return f0 + 0.5 * k * grad[0] * grad[0];
        }
        let n = self.opts.quad_points;
        periodic_midpoints(n).map(|y| self.base.energy_density(y, u, grad)).sum::<f64>() / n as f64
    }
}

impl CellCoefficients for EffectiveCoefficients {
    fn components(&self) -> usize {
        self.base.components()
    }

    fn dissipation_tensor(&self, _y: f64, u: &[f64]) -> DMatrix<f64> {
        match &self.tensor {
            Some(a) => a.clone(),
            None => self.mean_tensor(u).expect("ellipticity bounds keep the means invertible"),
        }
    }

    fn energy_density(&self, _y: f64, u: &[f64], grad: &[f64]) -> f64 {
        if !self.dep.energy {
            return self.base.energy_density(0.0, u, grad);
        }
        match (&self.table, self.opts.energy) {
            (Some(t), _) => t.value(u[0], grad[0]).unwrap_or(f64::INFINITY),
            (None, _) => self.averaged_density(u, grad),
        }
    }

    fn energy_density_grad(&self, _y: f64, u: &[f64], grad: &[f64]) -> (Vec<f64>, Vec<f64>) {
        if !self.dep.energy {
            return self.base.energy_density_grad(0.0, u, grad);
        }
        if let Some(t) = &self.table {
            return match t.eval(u[0], grad[0]) {
                Some((_, fu, fg)) => (vec![fu], vec![fg]),
                None => (vec![f64::NAN], vec![f64::NAN]),
            };
        }
        if let Some(k) = self.mean_stiffness {
            let (du, _) = self.base.energy_density_grad(0.0, u, grad);
            return (du, vec![k * grad[0]]);
        }
        let n = self.opts.quad_points;
        let i_c = self.components();
        let (mut du, mut dg) = (vec![0.0; i_c], vec![0.0; i_c]);
        for y in periodic_midpoints(n) {
            let (a, b) = self.base.energy_density_grad(y, u, grad);
            for k in 0..i_c {
                du[k] += a[k] / n as f64;
                dg[k] += b[k] / n as f64;
            }
        }
        (du, dg)
    }

    fn forcing(&self, _y: f64, t: f64, u: &[f64]) -> Vec<f64> {
        if self.dep.forcing {
            mean_forcing(self.base.as_ref(), t, u, self.opts.quad_points)
        } else {
            self.base.forcing(0.0, t, u)
        }
    }

    fn growth(&self) -> Growth {
        self.base.growth()
    }

    fn y_dependence(&self) -> YDependence {
        YDependence::default()
    }

    fn dissipation_depends_on_state(&self) -> bool {
        self.base.dissipation_depends_on_state()
    }

    fn forcing_depends_on_time(&self) -> bool {
        self.base.forcing_depends_on_time()
    }

    fn quadratic_in_gradient(&self, _y: f64, u: &[f64]) -> Option<(f64, f64)> {
        if self.dep.energy {
            None
        } else {
            self.base.quadratic_in_gradient(0.0, u)
        }
    }

    fn in_domain(&self, u: &[f64], grad: &[f64]) -> bool {
        match &self.table {
            Some(t) => t.contains(u[0], grad[0]),
            None => self.base.in_domain(u, grad),
        }
    }
}

/// ε-independent system with dissipation `A_aver` (or `A_harm`), energy
/// density `F_hom` (or `∫𝔽dy`) and perturbation `b_aver`, discretized like
/// the ε-systems on `grid`.
pub fn build_effective_system(
    coeffs: Arc<dyn CellCoefficients>,
    grid: Grid,
    opts: &EffectiveOptions,
) -> Result<RdsSystem, HomogError> {
    let eff = EffectiveCoefficients::new(coeffs, *opts)?;
    let name = format!(
        "effective({}, {})",
        match opts.dissipation {
            DissipationMode::Aver => "aver",
            DissipationMode::Harm => "harm",
        },
        match opts.energy {
            EnergyMode::Homogenized => "hom",
            EnergyMode::ArithmeticAverage => "arith",
        }
    );
    Ok(assemble_system(Arc::new(eff), 1.0, grid)?.with_name(&name))
}
