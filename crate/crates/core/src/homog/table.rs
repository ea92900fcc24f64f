use serde::Serialize;

use super::cell::{cell_closed_form, solve_cell_problem, CellOptions};
use super::HomogError;
use crate::rds::CellCoefficients;

/// Tabulation box and tolerances for `F_hom(u, U)` (scalar states).
#[derive(Debug, Clone, Copy)]
pub struct TableSpec {
    pub u_range: (f64, f64),
    /// Odd, so that every other node forms the coarse table for the
    /// grid-doubling estimate.
    pub u_points: usize,
    pub grad_range: (f64, f64),
    pub grad_points: usize,
    /// Largest admissible grid-doubling estimate.
    pub tol: f64,
    pub cell: CellOptions,
}

impl Default for TableSpec {
    fn default() -> Self {
        TableSpec {
            u_range: (-3.0, 3.0),
            u_points: 121,
            grad_range: (-8.0, 8.0),
            grad_points: 65,
            tol: 1e-5,
            cell: CellOptions::default(),
        }
    }
}

/// `F_hom` on a tensor grid with values, both partials and the mixed
/// partial at every node; evaluated by bicubic Hermite interpolation (C¹).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FhomTable {
    pub u_nodes: Vec<f64>,
    pub grad_nodes: Vec<f64>,
    /// Row-major in `(u, U)`.
    pub values: Vec<f64>,
    pub d_u: Vec<f64>,
    pub d_grad: Vec<f64>,
    pub d_cross: Vec<f64>,
    /// Max deviation of the half-resolution table at the dropped nodes.
    pub doubling_estimate: f64,
    /// Most negative second difference of `F_hom(u, ·)` (zero if convex).
    pub convexity_defect: f64,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

fn locate(nodes: &[f64], x: f64) -> Option<(usize, f64, f64)> {
    let (lo, hi) = (nodes[0], nodes[nodes.len() - 1]);
    if !(x >= lo && x <= hi) {
        return None;
    }
    let n = nodes.len() - 1;
    let d = (hi - lo) / n as f64;
    let k = (((x - lo) / d).floor() as usize).min(n - 1);
    Some((k, (x - nodes[k]) / d, d))
}

/// Hermite basis `[h00, h10, h01, h11]` and their `t`-derivatives.
fn hermite(t: f64) -> ([f64; 4], [f64; 4]) {
    let (t2, t3) = (t * t, t * t * t);
    (
        [2.0 * t3 - 3.0 * t2 + 1.0, t3 - 2.0 * t2 + t, -2.0 * t3 + 3.0 * t2, t3 - t2],
        [6.0 * t2 - 6.0 * t, 3.0 * t2 - 4.0 * t + 1.0, -6.0 * t2 + 6.0 * t, 3.0 * t2 - 2.0 * t],
    )
}

impl FhomTable {
    /// Tabulate from cell problems (harmonic-mean closed form when it
    /// applies) and run the grid-doubling check.
    pub fn build(c: &dyn CellCoefficients, spec: &TableSpec) -> Result<Self, HomogError> {
        if c.components() != 1 {
            return Err(HomogError::InvalidParameter("F_hom tables support scalar states only".into()));
        }
        for (n, name) in [(spec.u_points, "u_points"), (spec.grad_points, "grad_points")] {
            if n < 5 || n % 2 == 0 {
                return Err(HomogError::InvalidParameter(format!("{name} = {n} must be odd and >= 5")));
            }
        }
        if !(spec.u_range.0 < spec.u_range.1 && spec.grad_range.0 < spec.grad_range.1) {
            return Err(HomogError::InvalidParameter("empty tabulation box".into()));
        }
        let u_nodes = linspace(spec.u_range.0, spec.u_range.1, spec.u_points);
        let grad_nodes = linspace(spec.grad_range.0, spec.grad_range.1, spec.grad_points);
        let (nu, ng) = (u_nodes.len(), grad_nodes.len());
        let mut values = vec![0.0; nu * ng];
        let mut d_u = vec![0.0; nu * ng];
        let mut d_grad = vec![0.0; nu * ng];
        for (i, &u) in u_nodes.iter().enumerate() {
            for (j, &g) in grad_nodes.iter().enumerate() {
                let p = match cell_closed_form(c, &[u], &[g], spec.cell.resolution)? {
                    Some(p) => p,
                    None => solve_cell_problem(c, &[u], &[g], &spec.cell)?,
                };
                values[i * ng + j] = p.value;
                d_u[i * ng + j] = p.d_u[0];
                d_grad[i * ng + j] = p.d_grad[0];
            }
        }
        let du_step = u_nodes[1] - u_nodes[0];
        let mut d_cross = vec![0.0; nu * ng];
        for i in 0..nu {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(nu - 1));
            for j in 0..ng {
                d_cross[i * ng + j] = (d_grad[b * ng + j] - d_grad[a * ng + j]) / ((b - a) as f64 * du_step);
            }
        }
        let mut convexity_defect: f64 = 0.0;
        for i in 0..nu {
            for j in 1..ng - 1 {
                let s = values[i * ng + j + 1] - 2.0 * values[i * ng + j] + values[i * ng + j - 1];
                convexity_defect = convexity_defect.min(s + 1e-12 * (1.0 + values[i * ng + j].abs()));
            }
        }
        let mut table = FhomTable {
            u_nodes,
            grad_nodes,
            values,
            d_u,
            d_grad,
            d_cross,
            doubling_estimate: 0.0,
            convexity_defect,
        };
        let coarse = table.every_other();
        let mut est: f64 = 0.0;
        for i in 0..nu {
            for j in 0..ng {
                if i % 2 == 1 || j % 2 == 1 {
                    let k = i * ng + j;
                    let v = coarse.value(table.u_nodes[i], table.grad_nodes[j]).expect("inside box");
                    est = est.max((v - table.values[k]).abs());
                }
            }
        }
        table.doubling_estimate = est;
        if est > spec.tol {
            return Err(HomogError::TabulationGapTooCoarse { estimate: est, tol: spec.tol });
        }
        Ok(table)
    }

    fn every_other(&self) -> FhomTable {
        let ng = self.grad_nodes.len();
        let pick = |src: &[f64]| -> Vec<f64> {
            (0..self.u_nodes.len())
                .step_by(2)
                .flat_map(|i| (0..ng).step_by(2).map(move |j| i * ng + j))
                .map(|k| src[k])
                .collect()
        };
        FhomTable {
            u_nodes: self.u_nodes.iter().step_by(2).copied().collect(),
            grad_nodes: self.grad_nodes.iter().step_by(2).copied().collect(),
            values: pick(&self.values),
            d_u: pick(&self.d_u),
            d_grad: pick(&self.d_grad),
            d_cross: pick(&self.d_cross),
            doubling_estimate: 0.0,
            convexity_defect: 0.0,
        }
    }

    pub fn contains(&self, u: f64, grad: f64) -> bool {
        locate(&self.u_nodes, u).is_some() && locate(&self.grad_nodes, grad).is_some()
    }

    /// `(F, ∂_u F, ∂_U F)` at `(u, U)`; `None` outside the box.
    pub fn eval(&self, u: f64, grad: f64) -> Option<(f64, f64, f64)> {
        let (i, s, du) = locate(&self.u_nodes, u)?;
        let (j, t, dg) = locate(&self.grad_nodes, grad)?;
        let ng = self.grad_nodes.len();
        let (hs, dhs) = hermite(s);
        let (ht, dht) = hermite(t);
        let (mut f, mut fu, mut fg) = (0.0, 0.0, 0.0);
        for (a, ia) in [(0usize, i), (1, i + 1)] {
            for (b, jb) in [(0usize, j), (1, j + 1)] {
                let k = ia * ng + jb;
                // basis slots: value at corner a -> 2a, slope -> 2a + 1
                let (pv, ps) = (2 * a, 2 * a + 1);
                let (qv, qs) = (2 * b, 2 * b + 1);
                let coeffs = [
                    (pv, qv, self.values[k]),
                    (ps, qv, du * self.d_u[k]),
                    (pv, qs, dg * self.d_grad[k]),
                    (ps, qs, du * dg * self.d_cross[k]),
                ];
                for (p, q, c) in coeffs {
                    f += c * hs[p] * ht[q];
                    fu += c * dhs[p] * ht[q] / du;
                    fg += c * hs[p] * dht[q] / dg;
                }
            }
        }
        Some((f, fu, fg))
    }

    pub fn value(&self, u: f64, grad: f64) -> Option<f64> {
        self.eval(u, grad).map(|e| e.0)
    }

    /// `(u, U, value)` rows.
    pub fn rows(&self) -> Vec<(f64, f64, f64)> {
        let ng = self.grad_nodes.len();
        let mut out = Vec::with_capacity(self.values.len());
        for (i, &u) in self.u_nodes.iter().enumerate() {
            for (j, &g) in self.grad_nodes.iter().enumerate() {
                out.push((u, g, self.values[i * ng + j]));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rds::ScalarCoefficients;

    #[test]
    fn quartic_plus_harmonic_quadratic() {
        let c = ScalarCoefficients::oscillatory_diffusion();
        let t = FhomTable::build(&c, &TableSpec::default()).unwrap();
        let kh = 3.0_f64.sqrt();
        for &(u, g) in &[(0.0, 0.0), (0.33, 1.7), (-1.21, -5.5), (2.9, 7.9)] {
            let (f, fu, fg) = t.eval(u, g).unwrap();
            let exact = 1.0 + 0.25 * u.powi(4) + 0.5 * kh * g * g;
            assert!((f - exact).abs() < 1e-6, "({u}, {g}): {f} vs {exact}");
            assert!((fu - u.powi(3)).abs() < 1e-4);
            assert!((fg - kh * g).abs() < 1e-9);
        }
        assert!(t.eval(3.5, 0.0).is_none());
        assert!(t.convexity_defect == 0.0);
        assert!(t.doubling_estimate < 1e-5);
    }

    #[test]
    fn interpolant_is_continuously_differentiable() {
        let c = ScalarCoefficients::oscillatory_diffusion();
        let spec = TableSpec {
            u_points: 21,
            grad_points: 21,
            tol: 1.0,
            ..TableSpec::default()
        };
        let t = FhomTable::build(&c, &spec).unwrap();
        let node = t.u_nodes[7];
        let (_, left, _) = t.eval(node - 1e-12, 0.4).unwrap();
        let (_, right, _) = t.eval(node + 1e-12, 0.4).unwrap();
        assert!((left - right).abs() < 1e-9);
        let h = 1e-6;
        let (f0, fu, fg) = t.eval(0.37, 1.3).unwrap();
        let fd_u = (t.value(0.37 + h, 1.3).unwrap() - t.value(0.37 - h, 1.3).unwrap()) / (2.0 * h);
        let fd_g = (t.value(0.37, 1.3 + h).unwrap() - t.value(0.37, 1.3 - h).unwrap()) / (2.0 * h);
        assert!((fd_u - fu).abs() < 1e-6 && (fd_g - fg).abs() < 1e-6, "{f0}");
    }

    #[test]
    fn coarse_table_is_flagged() {
        let c = ScalarCoefficients::oscillatory_diffusion();
        let spec = TableSpec {
            u_points: 7,
            grad_points: 7,
            ..TableSpec::default()
        };
        assert!(matches!(
            FhomTable::build(&c, &spec),
            Err(HomogError::TabulationGapTooCoarse { .. })
        ));
    }
}
