use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use super::{dissipation_functional, GradientSystem, ModelError, SampleSet};
use crate::convex::{legendre_fenchel_with, ConjugateOptions, SearchBox};
use crate::vecops::{norm, norm_inf, scale};

/// Values of `Ψ*` above this are treated as overflow by the probes.
pub const OVERFLOW_THRESHOLD: f64 = 1e12;

const ROUNDOFF: f64 = 1e-12;

/// Result of one sampled assumption check. `worst_violation <= 0` means no
/// violation was found on the samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub probe_name: String,
    pub samples: usize,
    pub worst_violation: f64,
    pub inferred_constants: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<f64>,
}

impl AssumptionReport {
    fn new(name: &str, samples: usize) -> Self {
        AssumptionReport {
            probe_name: name.into(),
            samples,
            worst_violation: f64::NEG_INFINITY,
            inferred_constants: BTreeMap::new(),
            trace: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.worst_violation <= 0.0
    }

    pub fn constant(&self, key: &str) -> Option<f64> {
        self.inferred_constants.get(key).copied()
    }

    fn finish(mut self) -> Self {
        if self.worst_violation == f64::NEG_INFINITY {
            self.worst_violation = 0.0;
        }
        self
    }
}

/// Energetic control of power: smallest `C` with `|∂_t E_t(u)| <= C E_t(u)`
/// on the samples, plus the Gronwall chain
/// `e^{-C|t-s|} E_s(u) <= E_t(u) <= e^{C|t-s|} E_s(u)` on sampled pairs and a
/// finite-difference check of the power oracle.
pub fn probe_power_control(sys: &dyn GradientSystem, samples: &SampleSet) -> Result<AssumptionReport, ModelError> {
    let mut rep = AssumptionReport::new("power_control", samples.len());
    let mut c: f64 = 0.0;
    for s in &samples.samples {
        if !sys.in_domain(&s.u) {
            continue;
        }
        let e = sys.energy(s.t, &s.u);
        if !(e > 0.0) {
            return Err(ModelError::NonpositiveEnergy { t: s.t, value: e });
        }
        c = c.max(sys.power(s.t, &s.u).abs() / e);
    }
    let mut worst = f64::NEG_INFINITY;
    let mut fd_err: f64 = 0.0;
    let n = samples.len();
    for (i, s) in samples.samples.iter().enumerate() {
        if !sys.in_domain(&s.u) {
            continue;
        }
        let other = &samples.samples[(i + 1) % n.max(1)];
        let (t0, t1) = (s.t, other.t);
        let e0 = sys.energy(t0, &s.u);
        let e1 = sys.energy(t1, &s.u);
        let k = (c * (t1 - t0).abs()).exp();
        let tol = ROUNDOFF * (1.0 + e0.abs() + e1.abs()) * (1.0 + k);
        worst = worst.max(e0 / k - e1 - tol).max(e1 - k * e0 - tol);

        let h = 1e-5;
        let fd = (sys.energy(s.t + h, &s.u) - sys.energy(s.t - h, &s.u)) / (2.0 * h);
        let err = (fd - sys.power(s.t, &s.u)).abs() / (1.0 + e0.abs());
        fd_err = fd_err.max(err);
        worst = worst.max(err - 1e-6);
    }
    rep.worst_violation = worst;
    rep.inferred_constants.insert("C".into(), c);
    rep.inferred_constants.insert("power_fd_error".into(), fd_err);
    Ok(rep.finish())
}

/// Control of `B` by the energy: smallest `β` with
/// `c Ψ*_u(B(t,u)/c) <= β (1 + E_t(u))`.
pub fn probe_perturbation_control(
    sys: &dyn GradientSystem,
    c: f64,
    samples: &SampleSet,
) -> Result<AssumptionReport, ModelError> {
    if !(c > 0.0 && c < 1.0) {
        return Err(ModelError::InvalidParameter(format!("c = {c} must lie in (0, 1)")));
    }
    let mut rep = AssumptionReport::new("perturbation_control", samples.len());
    let mut beta: f64 = 0.0;
    for s in &samples.samples {
        if !sys.in_domain(&s.u) {
            continue;
        }
        let b = sys.perturbation(s.t, &s.u);
        let conj = sys.dissipation_conj(&s.u, &scale(1.0 / c, &b));
        if !(conj <= OVERFLOW_THRESHOLD) {
            return Err(ModelError::ConjugateOverflow { value: conj });
        }
        let e = sys.energy(s.t, &s.u);
        beta = beta.max(c * conj / (1.0 + e));
    }
    rep.inferred_constants.insert("beta".into(), beta);
    rep.inferred_constants.insert("c".into(), c);
    rep.worst_violation = 0.0;
    Ok(rep.finish())
}

/// `Ψ_u(0) = Ψ*_u(0) = 0` and nonnegativity of both on the samples.
pub fn probe_dissipation_potential(sys: &dyn GradientSystem, samples: &SampleSet) -> AssumptionReport {
    let mut rep = AssumptionReport::new("dissipation_potential", samples.len());
    let zero = vec![0.0; sys.dim()];
    let mut worst = f64::NEG_INFINITY;
    for s in &samples.samples {
        let p0 = sys.dissipation(&s.u, &zero);
        let c0 = sys.dissipation_conj(&s.u, &zero);
        let p = sys.dissipation(&s.u, &s.v);
        let c = sys.dissipation_conj(&s.u, &s.v);
        let tol = ROUNDOFF * (1.0 + p.abs() + c.abs());
        worst = worst
            .max(p0.abs() - tol)
            .max(c0.abs() - tol)
            .max(-p - tol)
            .max(-c - tol);
    }
    rep.worst_violation = worst;
    rep.finish()
}

const RAY_SCALES: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];

/// Superlinearity of `Ψ_u`: `Ψ_u(sv)/(s|v|)` strictly increasing for `s >= 1`.
pub fn probe_superlinearity(sys: &dyn GradientSystem, samples: &SampleSet) -> AssumptionReport {
    let mut rep = AssumptionReport::new("dissipation_superlinearity", samples.len());
    let mut worst = f64::NEG_INFINITY;
    let mut min_growth = f64::INFINITY;
    for s in &samples.samples {
        let nv = norm(&s.v);
        if nv == 0.0 {
            continue;
        }
        let ratios: Vec<f64> = RAY_SCALES
            .iter()
            .map(|k| sys.dissipation(&s.u, &scale(*k, &s.v)) / (k * nv))
            .collect();
        for w in ratios.windows(2) {
            worst = worst.max(w[0] - w[1]);
            min_growth = min_growth.min((w[1] - w[0]) / w[0].abs().max(1e-300));
        }
    }
    rep.worst_violation = worst;
    rep.inferred_constants.insert("min_relative_growth".into(), min_growth);
    rep.finish()
}

/// Coercivity of `E_t`: the secant slope `(E_t(s d) - E_t(0))/s` along sampled
/// unit rays is nondecreasing in `s` and eventually positive.
pub fn probe_energy_coercivity(sys: &dyn GradientSystem, samples: &SampleSet) -> AssumptionReport {
    let mut rep = AssumptionReport::new("energy_coercivity", samples.len());
    let zero = vec![0.0; sys.dim()];
    let mut worst = f64::NEG_INFINITY;
    let mut min_slope = f64::INFINITY;
    for s in &samples.samples {
        let nu = norm(&s.u);
        if nu == 0.0 {
            continue;
        }
        let d = scale(1.0 / nu, &s.u);
        let e0 = sys.energy(s.t, &zero);
        let slopes: Vec<f64> = RAY_SCALES
            .iter()
            .map(|k| (sys.energy(s.t, &scale(*k, &d)) - e0) / k)
            .collect();
        for w in slopes.windows(2) {
            let tol = ROUNDOFF * (1.0 + w[0].abs() + w[1].abs() + e0.abs());
            worst = worst.max(w[0] - w[1] - tol);
        }
        let last = *slopes.last().unwrap();
        min_slope = min_slope.min(last);
        worst = worst.max(-last);
    }
    rep.worst_violation = worst;
    rep.inferred_constants.insert("min_secant_slope".into(), min_slope);
    rep.finish()
}

/// `dissipation_conj` against the numeric Legendre-Fenchel transform of
/// `dissipation`. Uses at most `max_samples` samples.
pub fn probe_conjugate_consistency(
    sys: Arc<dyn GradientSystem>,
    samples: &SampleSet,
    max_samples: usize,
) -> Result<AssumptionReport, ModelError> {
    let used = samples.len().min(max_samples);
    let mut rep = AssumptionReport::new("conjugate_consistency", used);
    let mut worst_abs: f64 = 0.0;
    let mut worst = f64::NEG_INFINITY;
    let opts = ConjugateOptions {
        overflow_threshold: f64::INFINITY,
        ..ConjugateOptions::default()
    };
    for s in samples.samples.iter().take(used) {
        let f = dissipation_functional(sys.clone(), s.u.clone()).without_conjugate();
        let xi = &s.v;
        let exact = sys.dissipation_conj(&s.u, xi);
        let radius = match sys.dissipation_diag(&s.u) {
            Some(m) => 2.0 * (1.0 + xi.iter().zip(&m).map(|(x, mi)| (x / mi).abs()).fold(0.0, f64::max)),
            None => 4.0 * (1.0 + norm_inf(xi)),
        };
        let numeric = legendre_fenchel_with(&f, xi, &SearchBox::cube(sys.dim(), radius), &opts)?;
        let err = (numeric - exact).abs();
        worst_abs = worst_abs.max(err);
        worst = worst.max(err - 1e-10 * (1.0 + exact.abs()));
    }
    rep.worst_violation = worst;
    rep.inferred_constants.insert("max_abs_error".into(), worst_abs);
    Ok(rep.finish())
}

/// One member of a Mosco sequence: the system, its base state and the
/// recovery velocity for the test velocity at index `i`.
pub struct MoscoCase<'a> {
    pub system: &'a dyn GradientSystem,
    pub base: Vec<f64>,
    pub velocities: Vec<Vec<f64>>,
}

/// Deviations `max_i |Ψ^k_{u_k}(v_{k,i}) - Ψ_u(v_i)|` along the sequence.
/// `trace` holds one deviation per member; `worst_violation` is the largest
/// increase between consecutive members.
pub fn probe_mosco_liminf(
    sequence: &[MoscoCase<'_>],
    limit: &MoscoCase<'_>,
) -> AssumptionReport {
    let mut rep = AssumptionReport::new("mosco_liminf", limit.velocities.len());
    for case in sequence {
        let dev = case
            .velocities
            .iter()
            .zip(&limit.velocities)
            .map(|(vk, v)| {
                (case.system.dissipation(&case.base, vk) - limit.system.dissipation(&limit.base, v)).abs()
            })
            .fold(0.0, f64::max);
        rep.trace.push(dev);
    }
    let mut worst = f64::NEG_INFINITY;
    for w in rep.trace.windows(2) {
        worst = worst.max(w[1] - w[0] - ROUNDOFF * (1.0 + w[0]));
    }
    rep.worst_violation = worst;
    if let Some(last) = rep.trace.last() {
        rep.inferred_constants.insert("final_deviation".into(), *last);
    }
    rep.finish()
}

/// Power control, perturbation control (`c = ½`), dissipation potential,
/// superlinearity and coercivity on one seeded sample set.
pub fn run_standard_probes(
    sys: &dyn GradientSystem,
    samples: &SampleSet,
) -> Result<Vec<AssumptionReport>, ModelError> {
    Ok(vec![
        probe_power_control(sys, samples)?,
        probe_perturbation_control(sys, 0.5, samples)?,
        probe_dissipation_potential(sys, samples),
        probe_superlinearity(sys, samples),
        probe_energy_coercivity(sys, samples),
    ])
}
