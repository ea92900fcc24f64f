//! Finite-dimensional convex-analysis primitives: a functional oracle type,
//! the numeric Legendre-Fenchel transform, the Fenchel-Young gap and sampled
//! subdifferential residuals.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::solver::{minimize, FnObjective, MinimizeSpec};
use crate::vecops::{dot, norm, norm_inf};

pub type EvalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type DomFn = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConvexError {
    #[error("conjugate value {value:e} exceeds the overflow threshold {threshold:e}")]
    UnboundedConjugate { value: f64, threshold: f64 },
    #[error("functional evaluates to +inf at the supplied argument")]
    InfiniteValue,
    #[error("functional is not flagged convex")]
    NotConvex,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("search box is empty or has no point in the domain")]
    EmptySearchBox,
}

/// Relative tolerance used to classify a Fenchel-Young gap as zero:
/// `1e-8 * (1 + |f(u)| + |f*(xi)|)`.
pub fn gap_tolerance(f_u: f64, f_star_xi: f64) -> f64 {
    1e-8 * (1.0 + f_u.abs() + f_star_xi.abs())
}

/// An extended-real functional on `R^dim` given by evaluation oracles.
#[derive(Clone)]
pub struct Functional {
    dim: usize,
    eval: EvalFn,
    grad: Option<GradFn>,
    dom: Option<DomFn>,
    convex: bool,
    conjugate: Option<EvalFn>,
}

impl fmt::Debug for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Functional")
            .field("dim", &self.dim)
            .field("has_grad", &self.grad.is_some())
            .field("has_domain", &self.dom.is_some())
            .field("convex", &self.convex)
            .field("closed_form_conjugate", &self.conjugate.is_some())
            .finish()
    }
}

impl Functional {
    pub fn new(dim: usize, eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Functional {
            dim,
            eval: Arc::new(eval),
            grad: None,
            dom: None,
            convex: false,
            conjugate: None,
        }
    }

    pub fn with_grad(mut self, g: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.grad = Some(Arc::new(g));
        self
    }

    pub fn with_domain(mut self, d: impl Fn(&[f64]) -> bool + Send + Sync + 'static) -> Self {
        self.dom = Some(Arc::new(d));
        self
    }

    pub fn convex(mut self, flag: bool) -> Self {
        self.convex = flag;
        self
    }

    /// Register a closed-form conjugate; `legendre_fenchel` will use it.
    pub fn with_conjugate(mut self, c: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.conjugate = Some(Arc::new(c));
        self
    }

    pub fn without_conjugate(mut self) -> Self {
        self.conjugate = None;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_convex(&self) -> bool {
        self.convex
    }

    pub fn has_grad(&self) -> bool {
        self.grad.is_some()
    }

    pub fn has_closed_form_conjugate(&self) -> bool {
        self.conjugate.is_some()
    }

    pub fn in_domain(&self, u: &[f64]) -> bool {
        self.dom.as_ref().map_or(true, |d| d(u))
    }

    /// Value at `u`; `+inf` exactly where the domain predicate fails.
    pub fn eval(&self, u: &[f64]) -> f64 {
        if !self.in_domain(u) {
            return f64::INFINITY;
        }
        (self.eval)(u)
    }

    pub fn grad(&self, u: &[f64]) -> Option<Vec<f64>> {
        self.grad.as_ref().map(|g| g(u))
    }

    /// The registered conjugate as a functional in its own right.
    pub fn closed_form_conjugate(&self) -> Option<Functional> {
        let c = self.conjugate.clone()?;
        Some(Functional {
            dim: self.dim,
            eval: c,
            grad: None,
            dom: None,
            convex: true,
            conjugate: Some(self.eval.clone()),
        })
    }

    /// `½ Σ a_i v_i²` with `a_i > 0`.
    pub fn quadratic(diag: Vec<f64>) -> Self {
        assert!(diag.iter().all(|a| *a > 0.0), "quadratic weights must be positive");
        let n = diag.len();
        let (d1, d2, d3) = (diag.clone(), diag.clone(), diag);
        Functional::new(n, move |v| 0.5 * v.iter().zip(&d1).map(|(x, a)| a * x * x).sum::<f64>())
            .with_grad(move |v| v.iter().zip(&d2).map(|(x, a)| a * x).collect())
            .with_conjugate(move |xi| 0.5 * xi.iter().zip(&d3).map(|(x, a)| x * x / a).sum::<f64>())
            .convex(true)
    }

    /// `Σ |v_i|`; its conjugate is the indicator of the unit sup-ball.
    pub fn l1(dim: usize) -> Self {
        Functional::new(dim, |v| v.iter().map(|x| x.abs()).sum())
            .with_conjugate(|xi| {
                if xi.iter().all(|x| x.abs() <= 1.0) {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .convex(true)
    }

    /// `Σ |v_i|^p / p` for `p > 1`, conjugate `Σ |xi_i|^q / q` with `1/p + 1/q = 1`.
    pub fn power(dim: usize, p: f64) -> Self {
        assert!(p > 1.0);
        let q = p / (p - 1.0);
        Functional::new(dim, move |v| v.iter().map(|x| x.abs().powf(p) / p).sum())
            .with_grad(move |v| v.iter().map(|x| x.signum() * x.abs().powf(p - 1.0)).collect())
            .with_conjugate(move |xi| xi.iter().map(|x| x.abs().powf(q) / q).sum())
            .convex(true)
    }
}

/// Axis-aligned box bounding the supremum in the numeric transform.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SearchBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        SearchBox { lo, hi }
    }

    pub fn cube(dim: usize, radius: f64) -> Self {
        SearchBox {
            lo: vec![-radius; dim],
            hi: vec![radius; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(x, (l, h))| *x >= *l && *x <= *h)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    fn is_valid(&self) -> bool {
        self.lo.len() == self.hi.len() && self.lo.iter().zip(&self.hi).all(|(l, h)| l <= h)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConjugateOptions {
    pub overflow_threshold: f64,
    pub random_starts: usize,
    pub seed: u64,
}

impl Default for ConjugateOptions {
    fn default() -> Self {
        ConjugateOptions {
            overflow_threshold: 1e6,
            random_starts: 8,
            seed: 0x5eed,
        }
    }
}

/// `f*(xi) = sup_{u in box} <xi,u> - f(u)` with default options.
pub fn legendre_fenchel(f: &Functional, xi: &[f64], search: &SearchBox) -> Result<f64, ConvexError> {
    legendre_fenchel_with(f, xi, search, &ConjugateOptions::default())
}

pub fn legendre_fenchel_with(
    f: &Functional,
    xi: &[f64],
    search: &SearchBox,
    opts: &ConjugateOptions,
) -> Result<f64, ConvexError> {
    if xi.len() != f.dim() {
        return Err(ConvexError::DimensionMismatch {
            expected: f.dim(),
            got: xi.len(),
        });
    }
    let value = if let Some(c) = &f.conjugate {
        c(xi)
    } else {
        if search.dim() != f.dim() {
            return Err(ConvexError::DimensionMismatch {
                expected: f.dim(),
                got: search.dim(),
            });
        }
        if !search.is_valid() {
            return Err(ConvexError::EmptySearchBox);
        }
        numeric_sup(f, xi, search, opts)?
    };
    if value.is_nan() {
        return Err(ConvexError::InfiniteValue);
    }
    if value > opts.overflow_threshold {
        return Err(ConvexError::UnboundedConjugate {
            value,
            threshold: opts.overflow_threshold,
        });
    }
    Ok(value)
}

fn grid_points_per_axis(dim: usize) -> usize {
    match dim {
        1 => 2001,
        2 => 201,
        _ => 41,
    }
}

fn numeric_sup(
    f: &Functional,
    xi: &[f64],
    search: &SearchBox,
    opts: &ConjugateOptions,
) -> Result<f64, ConvexError> {
    let n = f.dim();
    let concave = |u: &[f64]| dot(xi, u) - f.eval(u);
    let mut starts: Vec<Vec<f64>> = Vec::new();
    let mut best = f64::NEG_INFINITY;

    if n <= 3 {
        let m = grid_points_per_axis(n);
        let mut idx = vec![0usize; n];
        let mut u = vec![0.0; n];
        let mut best_u = search.center();
        loop {
            for k in 0..n {
                let s = idx[k] as f64 / (m - 1) as f64;
                u[k] = search.lo[k] + s * (search.hi[k] - search.lo[k]);
            }
            let val = concave(&u);
            if val > best {
                best = val;
                best_u.copy_from_slice(&u);
            }
            let mut k = 0;
            while k < n {
                idx[k] += 1;
                if idx[k] < m {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == n {
                break;
            }
        }
        starts.push(best_u);
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        starts.push(search.center());
        for _ in 0..opts.random_starts {
            let u: Vec<f64> = (0..n).map(|k| rng.gen_range(search.lo[k]..=search.hi[k])).collect();
            starts.push(u);
        }
        for s in &starts {
            best = best.max(concave(s));
        }
    }

    for start in starts {
        if !f.eval(&start).is_finite() {
            continue;
        }
        if let Some(v) = refine(f, xi, search, start) {
            best = best.max(v);
        }
    }
    if best == f64::NEG_INFINITY {
        return Err(ConvexError::EmptySearchBox);
    }
    Ok(best)
}

fn refine(f: &Functional, xi: &[f64], search: &SearchBox, start: Vec<f64>) -> Option<f64> {
    let n = f.dim();
    let value = |u: &[f64]| {
        if search.contains(u) {
            f.eval(u) - dot(xi, u)
        } else {
            f64::INFINITY
        }
    };
    let tol = 1e-11 * (1.0 + norm(xi));
    let res = if f.has_grad() {
        let grad = |u: &[f64]| {
            let mut g = f.grad(u).unwrap();
            g.iter_mut().zip(xi).for_each(|(a, b)| *a -= b);
            g
        };
        minimize(
            &FnObjective::with_gradient(n, value, grad),
            &MinimizeSpec::new(start, tol, 200 * n.max(1)),
        )
    } else {
        let mut spec = MinimizeSpec::new(start, 1e-12 * (1.0 + norm_inf(&search.hi)), 4000 * n.max(1));
        spec.f_tol = 1e-24;
        minimize(&FnObjective::new(n, value), &spec)
    };
    res.ok().map(|r| -r.value)
}

/// `f(u) + f*(xi) - <xi,u>`.
pub fn fenchel_young_gap(
    f: &Functional,
    f_star: &Functional,
    u: &[f64],
    xi: &[f64],
) -> Result<f64, ConvexError> {
    if u.len() != f.dim() || xi.len() != f_star.dim() {
        return Err(ConvexError::DimensionMismatch {
            expected: f.dim(),
            got: if u.len() != f.dim() { u.len() } else { xi.len() },
        });
    }
    let a = f.eval(u);
    let b = f_star.eval(xi);
    if !a.is_finite() || !b.is_finite() {
        return Err(ConvexError::InfiniteValue);
    }
    Ok(a + b - dot(xi, u))
}

const RESIDUAL_RADII: [f64; 6] = [1.0, 0.3, 0.1, 0.03, 0.01, 1e-3];
const RESIDUAL_RANDOM_DIRECTIONS: usize = 16;

/// `max_v f(u) - f(v) - <xi, u - v>` over a deterministic sample of `v` around
/// `u`; a value `<= tol` certifies `xi ∈ ∂f(u)` on the sample.
pub fn subdiff_residual(f: &Functional, u: &[f64], xi: &[f64]) -> Result<f64, ConvexError> {
    if !f.is_convex() {
        return Err(ConvexError::NotConvex);
    }
    let n = f.dim();
    if u.len() != n || xi.len() != n {
        return Err(ConvexError::DimensionMismatch {
            expected: n,
            got: if u.len() != n { u.len() } else { xi.len() },
        });
    }
    let fu = f.eval(u);
    if !fu.is_finite() {
        return Err(ConvexError::InfiniteValue);
    }
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(2 * n + RESIDUAL_RANDOM_DIRECTIONS + 2);
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut d = vec![0.0; n];
            d[i] = s;
            dirs.push(d);
        }
    }
    if let Some(g) = f.grad(u) {
        let d: Vec<f64> = xi.iter().zip(&g).map(|(a, b)| a - b).collect();
        let dn = norm(&d);
        if dn > 0.0 {
            dirs.push(d.iter().map(|x| x / dn).collect());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xd1ff);
    for _ in 0..RESIDUAL_RANDOM_DIRECTIONS {
        let d: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dn = norm(&d);
        if dn > 0.0 {
            dirs.push(d.iter().map(|x| x / dn).collect());
        }
    }
    let scale = 1.0 + norm_inf(u);
    let mut worst = f64::NEG_INFINITY;
    let mut v = vec![0.0; n];
    for d in &dirs {
        for rho in RESIDUAL_RADII {
            let r = scale * rho;
            for k in 0..n {
                v[k] = u[k] + r * d[k];
            }
            let fv = f.eval(&v);
            if !fv.is_finite() {
                continue;
            }
            // <xi, u - v> = -r <xi, d>
            let res = fu - fv + r * dot(xi, d);
            worst = worst.max(res);
        }
    }
    Ok(worst)
}

/// A point, a covector and their Fenchel-Young gap.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPair {
    pub point: Vec<f64>,
    pub covector: Vec<f64>,
    pub gap: f64,
    pub tol: f64,
}

impl DualPair {
    pub fn new(f: &Functional, f_star: &Functional, u: &[f64], xi: &[f64]) -> Result<Self, ConvexError> {
        let gap = fenchel_young_gap(f, f_star, u, xi)?;
        let tol = gap_tolerance(f.eval(u), f_star.eval(xi));
        Ok(DualPair {
            point: u.to_vec(),
            covector: xi.to_vec(),
            gap,
            tol,
        })
    }

    /// Whether the covector is a subgradient at the point up to tolerance.
    pub fn is_subgradient(&self) -> bool {
        self.gap <= self.tol
    }
}
