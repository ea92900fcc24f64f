use super::scheme::Trajectory;
use super::step::{solve_step, StepProblem, StepSolution};
use super::EngineError;

/// De Giorgi variational interpolant at `s ∈ (t_{n-1}, t_n]`: the step problem
/// re-solved from the same base `U^{n-1}` with the same `w` and step length
/// `r = s - t_{n-1}`. Returns `(Ũ_τ(s), ξ̃_τ(s))` with certificates; at a
/// node (including `t_0`) it returns the node and its dual unchanged.
pub fn de_giorgi_interpolant(traj: &Trajectory, s: f64) -> Result<StepSolution, EngineError> {
    let n = traj.interval_of(s)?;
    if let Some(k) = traj.node_index(s) {
        return Ok(StepSolution {
            next: traj.nodes[k].clone(),
            xi: traj.duals[k].clone(),
            value: f64::NAN,
            fy_gap: 0.0,
            fy_tol: 0.0,
            e_residual: 0.0,
            e_tol: 0.0,
            iters: 0,
        });
    }
    let r = s - traj.times[n - 1];
    if !(r > 0.0) {
        return Err(EngineError::OutOfRange(s));
    }
    let p = StepProblem::new(
        traj.system.as_ref(),
        r,
        traj.times[n - 1],
        &traj.nodes[n - 1],
        &traj.applied[n - 1],
    );
    solve_step(&p, &traj.solver)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run_scheme, SchemeOptions};
    use crate::model::build_system;

    #[test]
    fn node_and_closed_form() {
        let tr = run_scheme(build_system("decay").unwrap(), &[1.0], 0.0, 1.0, 4, &SchemeOptions::default()).unwrap();
        let at_node = de_giorgi_interpolant(&tr, 0.5).unwrap();
        assert_eq!(at_node.next, tr.nodes[2]);
        // interior: Ũ = U^{n-1}/(1+r)
        for r in [0.2, 0.1, 0.01, 1e-4] {
            let s = 0.25 + r;
            let d = de_giorgi_interpolant(&tr, s).unwrap();
            assert!((d.next[0] - tr.nodes[1][0] / (1.0 + r)).abs() < 1e-9);
        }
        assert!(de_giorgi_interpolant(&tr, 1.5).is_err());
    }
}
