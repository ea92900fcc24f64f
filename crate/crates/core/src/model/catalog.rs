use std::sync::Arc;

use nalgebra::DMatrix;

use super::systems::{Forcing, LinearSystem, StateDependentScalar, StickSlip};
use super::{GradientSystem, ModelError};
use crate::rds;

/// Shipped systems: `(name, description)`.
pub const CATALOG: &[(&str, &str)] = &[
    ("decay", "u' = -u: E = ½u², Ψ = ½v², B = 0"),
    ("forced-decay", "u' = -u + 1: E = ½u², Ψ = ½v², B = 1"),
    ("nonautonomous", "E_t = (1+t)(1 + ½u²), Ψ = ½v², B = 0"),
    ("state-dependent", "Ψ_u = ½(1+u²)v², E = 1 + ½u² + ¼u⁴, B = ½ sin t"),
    ("coupled-16", "16-d quadratic chain, diagonal metric, skew coupling, E_t = (1 + t/4)(½uᵀKu + 1)"),
    ("stick-slip", "Ψ = ½|v| + ½v², E = ½u², B = 1.5 sin 2t"),
    ("rds-heat", "reaction-diffusion, 𝔽 = 1 + ½U² + 0.05u², 𝔸 = 1, B = 0, 32 cells"),
    ("rds-osc-diffusion", "reaction-diffusion, 𝔽 = 1 + ½(2+cos 2πy)U² + ¼u⁴, 𝔸 = 1, eps = 1/4"),
    ("rds-osc-dissipation", "reaction-diffusion, 𝔽 = 1 + ½U² + ¼u⁴, 𝔸 = 2+cos 2πy, eps = 1/4"),
    ("rds-default", "reaction-diffusion, 𝔸 = 2+cos 2πy, 𝔽 = ½aU² + ¼u⁴ + 1, 𝔹 = sin(2πy)sin t - u/2"),
    ("rds-state-dependent", "reaction-diffusion, 𝔸 = (2+cos 2πy)(1+u²/2), 𝔽 = 1 + ½U² + ¼u⁴"),
];

pub fn catalog_names() -> Vec<String> {
    CATALOG.iter().map(|(n, _)| n.to_string()).collect()
}

fn coupled_chain(n: usize) -> LinearSystem {
    let mut k = DMatrix::zeros(n, n);
    let mut l = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = 2.5;
        if i + 1 < n {
            k[(i, i + 1)] = -1.0;
            k[(i + 1, i)] = -1.0;
            l[(i, i + 1)] = 0.2;
            l[(i + 1, i)] = -0.2;
        }
    }
    LinearSystem {
        name: "coupled-16".into(),
        stiffness: k,
        shift: 1.0,
        lambda: 0.25,
        metric: (0..n).map(|i| 1.0 + 0.05 * i as f64).collect(),
        forcing: (0..n).map(|i| (i as f64).cos()).collect(),
        profile: Forcing::Sine { omega: 3.0 },
        coupling: l,
    }
}

/// Build a catalog system by name.
pub fn build_system(name: &str) -> Result<Arc<dyn GradientSystem>, ModelError> {
    let sys: Arc<dyn GradientSystem> = match name {
        "decay" => Arc::new(LinearSystem::scalar("decay", 1.0, 0.0, 0.0, 0.0)),
        "forced-decay" => Arc::new(LinearSystem::scalar("forced-decay", 1.0, 0.0, 0.0, 1.0)),
        "nonautonomous" => Arc::new(LinearSystem::scalar("nonautonomous", 1.0, 1.0, 1.0, 0.0)),
        "state-dependent" => Arc::new(StateDependentScalar {
            name: "state-dependent".into(),
            amplitude: 0.5,
        }),
        "coupled-16" => Arc::new(coupled_chain(16)),
        "stick-slip" => Arc::new(StickSlip {
            name: "stick-slip".into(),
            delta: 0.5,
            amplitude: 1.5,
            omega: 2.0,
        }),
        other => match rds::catalog_instance(other) {
            Some(sys) => sys,
            None => {
                return Err(ModelError::UnknownSystem {
                    name: other.into(),
                    known: catalog_names(),
                })
            }
        },
    };
    Ok(sys)
}
