//! Minimizing-movement schemes for perturbed gradient systems
//! `B(t,u) ∈ ∂Ψ_u(u') + ∂E_t(u)`, energy-dissipation diagnostics, and a
//! periodic homogenization lab for a quasilinear reaction-diffusion system.

pub mod convex;
pub mod quadrature;
pub mod solver;
pub mod vecops;
pub mod model;
pub mod rds;
pub mod engine;
pub mod homog;
pub mod lab;
