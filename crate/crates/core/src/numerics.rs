//! Shared numerical kernels: quadrature, root finding, 1-D minimization,
//! sphere grids, least squares, and small symmetric eigenproblems.

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

/// Euler gamma function.
pub fn gamma_fn(x: f64) -> f64 {
    gamma(x)
}

/// Surface area of the unit sphere `S^m` in `R^{m+1}`. `m = 0` gives 2.
pub fn sphere_area(m: usize) -> f64 {
    let m = m as f64;
    2.0 * std::f64::consts::PI.powf((m + 1.0) / 2.0) / gamma((m + 1.0) / 2.0)
}

/// Adaptive Simpson quadrature on `[a, b]`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
                + rec(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    rec(f, a, fa, b, fb, whole, m, fm, tol, 48)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 2);
    let n = order;
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-based initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence for P_n(x) and P'_n(x).
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        xs[i] = -x;
        xs[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        ws[i] = w;
        ws[n - 1 - i] = w;
    }
    (xs, ws)
}

/// Integrate `f` on `[a, b]` with a fixed-order Gauss-Legendre rule.
pub fn gauss_legendre_integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, order: usize) -> f64 {
    let (xs, ws) = gauss_legendre(order);
    let c = 0.5 * (b - a);
    let d = 0.5 * (a + b);
    let mut acc = 0.0;
    for (x, w) in xs.iter().zip(&ws) {
        acc += w * f(c * x + d);
    }
    c * acc
}

/// Golden-section minimization of a unimodal function on `[a, b]`.
pub fn golden_section<F: Fn(f64) -> f64>(
    f: &F,
    mut a: f64,
    mut b: f64,
    iters: usize,
) -> (f64, f64) {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Bisection root of a continuous function with a sign change on `[lo, hi]`.
pub fn bisect<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64, rel_tol: f64) -> Result<f64> {
    let flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::invalid(format!("no sign change on [{lo}, {hi}]")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 || (hi - lo) <= rel_tol * mid.abs().max(1e-300) {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Deterministic Fibonacci-type point set on the unit sphere `S^{n-1}`.
///
/// For `n = 1` this is `{+1}`; for `n = 2` a uniform angular grid; for
/// `n = 3` the Fibonacci lattice; in higher dimensions a low-discrepancy
/// Kronecker lattice mapped through independent normals would be needed, so
/// we fall back to a seeded ChaCha stream, which is still deterministic.
pub fn sphere_grid(n: usize, count: usize) -> Vec<Vec<f64>> {
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    match n {
        0 => Vec::new(),
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * (i as f64) / (count as f64);
                vec![a.cos(), a.sin()]
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / (count as f64);
                    let r = (1.0 - z * z).sqrt();
                    let a = golden * i as f64;
                    vec![r * a.cos(), r * a.sin(), z]
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5bd1_e995);
            (0..count)
                .map(|_| {
                    let mut v: Vec<f64> = (0..n)
                        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                        .collect();
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    for x in &mut v {
                        *x /= norm;
                    }
                    v
                })
                .collect()
        }
    }
}

/// Least squares fit of `y ~ X beta` with standard errors.
///
/// `row_sigma`, when given, scales row `i` by `1 / row_sigma[i]` before
/// solving, so rows with larger declared uncertainty weigh less. The
/// returned standard errors come from the (weighted) residual variance,
/// `sigma^2 (X^T W X)^{-1}`.
pub fn least_squares(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    row_sigma: Option<&[f64]>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let m = x.nrows();
    let p = x.ncols();
    if m < p + 1 {
        return Err(Error::IllConditioned(format!(
            "{m} rows for {p} coefficients"
        )));
    }
    let (xw, yw) = match row_sigma {
        Some(sigma) => {
            if sigma.len() != m || sigma.iter().any(|s| !(*s > 0.0)) {
                return Err(Error::invalid("row uncertainties must be positive"));
            }
            let mut xw = x.clone();
            let mut yw = y.clone();
            for i in 0..m {
                let w = 1.0 / sigma[i];
                for j in 0..p {
                    xw[(i, j)] *= w;
                }
                yw[i] *= w;
            }
            (xw, yw)
        }
        None => (x.clone(), y.clone()),
    };
    let xtx = xw.transpose() * &xw;
    let xty = xw.transpose() * &yw;
    let chol = xtx
        .clone()
        .cholesky()
        .ok_or_else(|| Error::IllConditioned("normal equations not positive definite".into()))?;
    let beta = chol.solve(&xty);
    let resid = &yw - &xw * &beta;
    let dof = (m - p).max(1) as f64;
    let sigma2 = resid.norm_squared() / dof;
    let cov = chol.inverse() * sigma2;
    let se = DVector::from_iterator(p, (0..p).map(|i| cov[(i, i)].max(0.0).sqrt()));
    Ok((beta, se))
}

/// Smallest eigenvalue and its unit eigenvector of a symmetric matrix.
pub fn smallest_eigenpair(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let sym = 0.5 * (m + m.transpose());
    let eig = sym.symmetric_eigen();
    let mut idx = 0;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] < eig.eigenvalues[idx] {
            idx = i;
        }
    }
    (
        eig.eigenvalues[idx],
        eig.eigenvectors.column(idx).into_owned(),
    )
}

/// Operator (spectral) norm of a symmetric matrix.
pub fn sym_operator_norm(m: &DMatrix<f64>) -> f64 {
    let sym = 0.5 * (m + m.transpose());
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, l| acc.max(l.abs()))
}

/// Slope of the least-squares line through `(ln x, ln y)` pairs.
pub fn loglog_slope(pts: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = pts
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|&(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}
