//! Quadrature rules and extrapolation used by the diagnostics.

/// Nodes and weights of a composite two-point Gauss-Legendre rule on `[a, b]`
/// with `panels` equal panels. Exact for cubics on every panel.
pub fn gauss_legendre_composite(a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    let off = 0.5 / 3.0_f64.sqrt();
    let mut out = Vec::with_capacity(2 * panels);
    for k in 0..panels {
        let mid = a + (k as f64 + 0.5) * h;
        out.push((mid - off * h, 0.5 * h));
        out.push((mid + off * h, 0.5 * h));
    }
    out
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let n = n.max(1);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out.reverse();
    out
}

/// Composite Gauss rule on `[a, b]` graded towards `a`: one panel on
/// `[a, a + (b-a)e^{-depth}]` and `panels` panels uniform in `log(x - a)`
/// above it. Resolves layers `1/(1 + λ(x-a))^k` uniformly in `λ`.
pub fn log_graded_rule(a: f64, b: f64, panels: usize, points: usize, depth: f64) -> Vec<(f64, f64)> {
    let gl = gauss_legendre(points);
    let len = b - a;
    let r0 = len * (-depth).exp();
    let mut out = Vec::with_capacity(gl.len() * (panels.max(1) + 1));
    for &(x, w) in &gl {
        out.push((a + 0.5 * r0 * (x + 1.0), 0.5 * r0 * w));
    }
    let (lo, hi) = (r0.ln(), len.ln());
    let m = panels.max(1);
    let dh = (hi - lo) / m as f64;
    for k in 0..m {
        let mid = lo + (k as f64 + 0.5) * dh;
        for &(x, w) in &gl {
            let rho = mid + 0.5 * dh * x;
            let r = rho.exp();
            out.push((a + r, 0.5 * dh * w * r));
        }
    }
    out
}

/// Integrate `f` over `[a, b]` with the composite two-point Gauss rule.
pub fn integrate<F: FnMut(f64) -> f64>(a: f64, b: f64, panels: usize, mut f: F) -> f64 {
    gauss_legendre_composite(a, b, panels)
        .into_iter()
        .map(|(x, w)| w * f(x))
        .sum()
}

/// Midpoint nodes `(j + 1/2) / n` of the unit cell. For smooth 1-periodic
/// integrands the equal-weight rule converges geometrically.
pub fn periodic_midpoints(n: usize) -> impl Iterator<Item = f64> {
    let h = 1.0 / n as f64;
    (0..n).map(move |j| (j as f64 + 0.5) * h)
}

/// Value at `x = 0` of the polynomial interpolating `(xs[i], ys[i])`
/// (Neville's scheme). Used for `r -> 0` limits of envelope tables.
pub fn extrapolate_to_zero(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    assert!(!xs.is_empty());
    let mut p = ys.to_vec();
    let n = xs.len();
    for level in 1..n {
        for i in 0..n - level {
            let (xi, xj) = (xs[i], xs[i + level]);
            p[i] = (xj * p[i] - xi * p[i + 1]) / (xj - xi);
        }
    }
    p[0]
}

/// Least-squares slope of `log(err)` against `log(param)`; `None` when fewer
/// than two strictly positive pairs are available.
pub fn loglog_slope(params: &[f64], errs: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = params
        .iter()
        .zip(errs)
        .filter(|(p, e)| **p > 0.0 && **e > 0.0 && e.is_finite())
        .map(|(p, e)| (p.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_is_exact_for_cubics() {
        let v = integrate(0.0, 2.0, 1, |x| x * x * x - x + 1.0);
        assert!((v - (4.0 - 2.0 + 2.0)).abs() < 1e-14);
    }

    #[test]
    fn gauss_legendre_matches_tabulated_rules() {
        let g = gauss_legendre(3);
        let x = (0.6_f64).sqrt();
        assert!((g[0].0 + x).abs() < 1e-15 && (g[2].0 - x).abs() < 1e-15 && g[1].0.abs() < 1e-15);
        assert!((g[0].1 - 5.0 / 9.0).abs() < 1e-15 && (g[1].1 - 8.0 / 9.0).abs() < 1e-15);
        for n in 1..12 {
            let g = gauss_legendre(n);
            let m = (2 * n - 2) as i32;
            let v: f64 = g.iter().map(|(x, w)| w * x.powi(m)).sum();
            assert!((v - 2.0 / (m as f64 + 1.0)).abs() < 1e-13, "n = {n}");
        }
    }

    #[test]
    fn graded_rule_resolves_boundary_layers() {
        let tau = 1.0 / 16.0;
        let rule = log_graded_rule(0.0, tau, 16, 6, 20.0);
        for lam in [0.0, 1.0, 40.0, 4e3, 1e6] {
            let v: f64 = rule.iter().map(|(r, w)| w / (1.0 + lam * r).powi(2)).sum();
            let exact = tau / (1.0 + lam * tau);
            assert!(((v - exact) / exact).abs() < 1e-10, "lambda = {lam}");
        }
    }

    #[test]
    fn neville_recovers_polynomial_limit() {
        let xs = [0.5, 0.25, 0.125, 0.0625];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 2.0 * x + x * x * x).collect();
        assert!((extrapolate_to_zero(&xs, &ys) - 3.0).abs() < 1e-13);
    }

    #[test]
    fn slope_of_first_order_data() {
        let p = [0.1, 0.05, 0.025];
        let e: Vec<f64> = p.iter().map(|x| 4.0 * x).collect();
        assert!((loglog_slope(&p, &e).unwrap() - 1.0).abs() < 1e-12);
    }
}
