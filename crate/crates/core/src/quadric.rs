//! Taylor expansion of the surface measure of quadric graphs.
//!
//! For `f(y) = <y, D y>` with `D` symmetric nonzero and a base point `x`
//! off the kernel, the surface measure of the graph `t = f(y)` satisfies
//! `sigma(B(X, r)) = c_n r^{n+1} + e(X) r^{n+3} + O(r^{n+4})` with no
//! `r^{n+2}` term. This module computes the polar coefficients of the
//! defining polynomial, the inverse radius expansion, the area by direct
//! quadrature, the closed-form kernel integrals behind the constants, and
//! the two expansion constants themselves. The bracket of the `r^{n+3}`
//! coefficient is the uniformity residual: it must vanish identically on
//! the support of any uniform measure carried by the quadric.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec;
use crate::geometry::orthonormal_complement;
use crate::numerics::{bisect, gamma_fn, gauss_legendre, least_squares, sphere_area};

/// Geometry of a quadric graph at a non-characteristic point.
#[derive(Debug, Clone)]
pub struct QuadricFrame {
    pub d: DMatrix<f64>,
    pub x: DVector<f64>,
    /// Unit horizontal normal `D x / |D x|`.
    pub normal: DVector<f64>,
    /// `c = 2 |D x|`.
    pub c: f64,
    /// `<n, D n>`.
    pub alpha: f64,
    /// Orthonormal basis of the normal's complement.
    pub tangent_basis: Vec<DVector<f64>>,
}

impl QuadricFrame {
    pub fn new(d: DMatrix<f64>, x: DVector<f64>) -> Result<Self> {
        let n = d.nrows();
        if n < 2 {
            return Err(Error::invalid("frame needs ambient dimension n >= 2"));
        }
        if d.ncols() != n || x.len() != n {
            return Err(Error::DimensionMismatch(d.ncols(), x.len()));
        }
        if (&d - d.transpose()).norm() > 1e-12 * (1.0 + d.norm()) {
            return Err(Error::invalid("matrix must be symmetric"));
        }
        if d.norm() == 0.0 {
            return Err(Error::invalid("matrix must be nonzero"));
        }
        let dx = &d * &x;
        let dx_norm = dx.norm();
        if dx_norm <= 1e-14 {
            return Err(Error::invalid("base point lies in the kernel"));
        }
        let normal = dx / dx_norm;
        let alpha = (normal.transpose() * &d * &normal)[(0, 0)];
        let normal_slice: Vec<f64> = normal.iter().copied().collect();
        let tangent_basis = orthonormal_complement(&normal_slice)
            .into_iter()
            .map(DVector::from_vec)
            .collect();
        Ok(QuadricFrame {
            d,
            x,
            normal,
            c: 2.0 * dx_norm,
            alpha,
            tangent_basis,
        })
    }

    pub fn n(&self) -> usize {
        self.d.nrows()
    }

    /// `<v, D n>` for a tangent direction.
    pub fn beta(&self, v: &DVector<f64>) -> f64 {
        (v.transpose() * &self.d * &self.normal)[(0, 0)]
    }

    /// `<v, D v>`.
    pub fn gamma(&self, v: &DVector<f64>) -> f64 {
        (v.transpose() * &self.d * v)[(0, 0)]
    }

    pub fn f(&self, y: &DVector<f64>) -> f64 {
        (y.transpose() * &self.d * y)[(0, 0)]
    }

    /// The polar chart `P(rho, theta, v) = (sin theta / c) rho^2 n +
    /// cos theta rho v` around the base point.
    pub fn chart(&self, rho: f64, theta: f64, v: &DVector<f64>) -> DVector<f64> {
        let (s, co) = theta.sin_cos();
        &self.normal * (s / self.c * rho * rho) + v * (co * rho)
    }

    /// `G(w) = |w|^4 + |c <n, w> + <w, D w>|^2`, whose sublevel set
    /// `{G <= r^4}` is the horizontal shadow of the ball on the graph.
    pub fn shadow_polynomial(&self, w: &DVector<f64>) -> f64 {
        let lin = self.c * self.normal.dot(w);
        let quad = (w.transpose() * &self.d * w)[(0, 0)];
        w.norm().powi(4) + (lin + quad) * (lin + quad)
    }

    fn check_tangent(&self, v: &DVector<f64>) -> Result<()> {
        if (v.norm() - 1.0).abs() > 1e-9 || self.normal.dot(v).abs() > 1e-9 {
            return Err(Error::invalid(
                "direction must be unit and orthogonal to the normal",
            ));
        }
        Ok(())
    }
}

/// Coefficients of `H(rho) = A rho^4 + (B/c) rho^5 + (C/c^2) rho^6 +
/// (D/c^3) rho^7 + (E/c^4) rho^8` in the polar chart.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HCoefficients {
    pub a: f64,
    pub b_bar: f64,
    pub c_bar: f64,
    pub d_bar: f64,
    pub e_bar: f64,
}

impl HCoefficients {
    pub fn eval(&self, rho: f64, c: f64) -> f64 {
        let r2 = rho * rho;
        let r4 = r2 * r2;
        r4 * (self.a
            + rho
                * (self.b_bar / c
                    + rho
                        * (self.c_bar / (c * c)
                            + rho
                                * (self.d_bar / (c * c * c) + rho * self.e_bar / (c * c * c * c)))))
    }

    fn derivative(&self, rho: f64, c: f64) -> f64 {
        let r2 = rho * rho;
        let r3 = r2 * rho;
        4.0 * self.a * r3
            + 5.0 * self.b_bar / c * r2 * r2
            + 6.0 * self.c_bar / (c * c) * r2 * r3
            + 7.0 * self.d_bar / (c * c * c) * r3 * r3
            + 8.0 * self.e_bar / (c * c * c * c) * r3 * r3 * rho
    }
}

/// The five polar coefficients at `(theta, v)`.
pub fn h_coefficients(frame: &QuadricFrame, theta: f64, v: &DVector<f64>) -> Result<HCoefficients> {
    frame.check_tangent(v)?;
    let (s, co) = theta.sin_cos();
    let co2 = co * co;
    let beta = frame.beta(v);
    let gamma = frame.gamma(v);
    let alpha = frame.alpha;
    let core = co2 * gamma + s;
    Ok(HCoefficients {
        a: co2 * co2 + core * core,
        b_bar: 4.0 * s * co * beta * core,
        c_bar: s * s * (co2 * (2.0 + 4.0 * beta * beta + 2.0 * gamma * alpha) + 2.0 * s * alpha),
        d_bar: 4.0 * alpha * beta * s * s * s * co,
        e_bar: (1.0 + alpha * alpha) * s * s * s * s,
    })
}

/// Third-order inverse of `H(rho) = r^4`:
/// `P(r) = r / A^{1/4} - B r^2 / (4 A^{3/2}) + (7 B^2 / (32 A^{11/4}) -
/// C / (4 A^{7/4})) r^3`, with `B = B_bar / c`, `C = C_bar / c^2`.
pub fn radius_solution(frame: &QuadricFrame, theta: f64, v: &DVector<f64>, r: f64) -> Result<f64> {
    let h = h_coefficients(frame, theta, v)?;
    let a = h.a;
    let b = h.b_bar / frame.c;
    let c = h.c_bar / (frame.c * frame.c);
    Ok(r / a.powf(0.25) - b * r * r / (4.0 * a.powf(1.5))
        + (7.0 / 32.0 * b * b / a.powf(2.75) - c / (4.0 * a.powf(1.75))) * r * r * r)
}

/// Exact root of `H(rho) = r^4` by bracketed bisection, with a
/// monotonicity check of `H` on the bracket.
pub fn exact_radius_root(
    frame: &QuadricFrame,
    theta: f64,
    v: &DVector<f64>,
    r: f64,
) -> Result<f64> {
    let h = h_coefficients(frame, theta, v)?;
    let target = r.powi(4);
    let c = frame.c;
    let mut hi = r / h.a.powf(0.25) * 1.5 + 1e-12;
    let mut grow = 0;
    while h.eval(hi, c) < target {
        hi *= 2.0;
        grow += 1;
        if grow > 60 {
            return Err(Error::RadiusOutOfRange(format!("no bracket for r = {r}")));
        }
    }
    let root = bisect(&|rho| h.eval(rho, c) - target, 0.0, hi, 1e-12)?;
    for k in 1..=16 {
        let rho = root * k as f64 / 16.0;
        if h.derivative(rho, c) < 0.0 {
            return Err(Error::RadiusOutOfRange(format!(
                "shadow polynomial not monotone at rho = {rho} (r = {r})"
            )));
        }
    }
    Ok(root)
}

/// The sub-Riemannian density `2 |D[x + P(rho, theta, v)]|`.
pub fn area_density(frame: &QuadricFrame, rho: f64, theta: f64, v: &DVector<f64>) -> f64 {
    let y = &frame.x + frame.chart(rho, theta, v);
    2.0 * (&frame.d * y).norm()
}

/// Quadrature budget for [`area_direct`].
#[derive(Debug, Clone)]
pub struct AreaOptions {
    pub theta_nodes: usize,
    pub rho_nodes: usize,
    /// Circle nodes for `n = 3`; Monte-Carlo directions for `n >= 4`.
    pub v_nodes: usize,
    pub seed: u64,
}

impl Default for AreaOptions {
    fn default() -> Self {
        AreaOptions {
            theta_nodes: 96,
            rho_nodes: 24,
            v_nodes: 64,
            seed: 0xa3ea,
        }
    }
}

fn tangent_directions(frame: &QuadricFrame, opts: &AreaOptions) -> (Vec<DVector<f64>>, Vec<f64>) {
    let n = frame.n();
    match n {
        2 => {
            // S^0 in the tangent line: two points with counting measure
            let v = frame.tangent_basis[0].clone();
            (vec![v.clone(), -v], vec![1.0, 1.0])
        }
        3 => {
            // uniform angular grid on the tangent circle (trapezoid rule)
            let m = opts.v_nodes.max(8);
            let w = 2.0 * std::f64::consts::PI / m as f64;
            let mut dirs = Vec::with_capacity(m);
            for k in 0..m {
                let a = w * k as f64;
                dirs.push(&frame.tangent_basis[0] * a.cos() + &frame.tangent_basis[1] * a.sin());
            }
            (dirs, vec![w; m])
        }
        _ => {
            // seeded Monte Carlo on the tangent sphere S^{n-2}
            let m = opts.v_nodes.max(32);
            let total = sphere_area(n - 2);
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let mut dirs = Vec::with_capacity(m);
            for _ in 0..m {
                let coords: Vec<f64> = (0..n - 1)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let mut v = DVector::zeros(n);
                for (k, b) in frame.tangent_basis.iter().enumerate() {
                    v += b * coords[k];
                }
                let norm = v.norm();
                dirs.push(v / norm);
            }
            (dirs, vec![total / m as f64; m])
        }
    }
}

/// Surface-measure mass of the ball `B((x, f(x)), r)` on the graph, by
/// tensor quadrature in `(theta, v)` and Gauss-Legendre in `rho` up to the
/// exact root of the shadow polynomial.
pub fn area_direct(frame: &QuadricFrame, r: f64, opts: &AreaOptions) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::invalid("radius must be positive"));
    }
    let n = frame.n();
    let c = frame.c;
    let (dirs, v_weights) = tangent_directions(frame, opts);
    let (tnodes, tweights) = gauss_legendre(opts.theta_nodes);
    let (rnodes, rweights) = gauss_legendre(opts.rho_nodes);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let contributions: Vec<Result<f64>> = exec::map_indexed(dirs.len(), |vi| {
        let v = &dirs[vi];
        let mut acc = 0.0;
        for (tn, tw) in tnodes.iter().zip(&tweights) {
            let theta = half_pi * tn;
            let rho_max = exact_radius_root(frame, theta, v, r)?;
            let cosn = theta.cos().powi(n as i32 - 2) * (1.0 + theta.sin() * theta.sin());
            let mut inner = 0.0;
            for (rn, rw) in rnodes.iter().zip(&rweights) {
                let rho = 0.5 * rho_max * (rn + 1.0);
                inner += rw * rho.powi(n as i32) * area_density(frame, rho, theta, v);
            }
            inner *= 0.5 * rho_max;
            acc += tw * half_pi * cosn * inner / c;
        }
        Ok(acc * v_weights[vi])
    });
    let mut total = 0.0;
    for c in contributions {
        total += c?;
    }
    Ok(total)
}

/// Monte-Carlo cross-check of the same ball area: parameter-space samples
/// with the coarea weight `|grad f|`, restricted to the ball.
pub fn area_monte_carlo(
    frame: &QuadricFrame,
    r: f64,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if !(r > 0.0) {
        return Err(Error::invalid("radius must be positive"));
    }
    let n = frame.n();
    let sd = r;
    let fx = frame.f(&frame.x);
    let nf = samples as f64;
    let (sum, sq) = {
        let parts = exec::map_chunks(samples, exec::CHUNK, |range| {
            let mut s = 0.0;
            let mut s2 = 0.0;
            for i in range {
                let mut rng = ChaCha8Rng::seed_from_u64(
                    seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i as u64 + 1)),
                );
                let w = DVector::from_iterator(
                    n,
                    (0..n).map(|_| sd * rng.sample::<f64, _>(StandardNormal)),
                );
                let y = &frame.x + &w;
                let fy = frame.f(&y);
                let dh2 = w.norm_squared();
                let dt = fy - fx;
                if dh2 * dh2 + dt * dt > r.powi(4) {
                    continue;
                }
                let density: f64 = w
                    .iter()
                    .map(|&x| {
                        (-0.5 * x * x / (sd * sd)).exp()
                            / (sd * (2.0 * std::f64::consts::PI).sqrt())
                    })
                    .product();
                let grad = (&frame.d * &y).norm() * 2.0;
                let val = grad / density;
                s += val;
                s2 += val * val;
            }
            (s, s2)
        });
        parts
            .into_iter()
            .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y))
    };
    let mean = sum / nf;
    let var = ((sq - sum * mean).max(0.0)) / ((samples - 1).max(1) as f64);
    Ok((mean, (var / nf).sqrt()))
}

/// Closed form of `int x^k / (1 + x^2)^alpha dx` over the line: zero for
/// odd `k`, `Gamma((k+1)/2) Gamma(alpha - (k+1)/2) / Gamma(alpha)` for
/// even `k`; requires `alpha > (k+1)/2`.
pub fn closed_form_kernel_integral(k: usize, alpha: f64) -> Result<f64> {
    let half = (k as f64 + 1.0) / 2.0;
    if alpha <= half {
        return Err(Error::invalid(format!("need alpha > {half}, got {alpha}")));
    }
    if k % 2 == 1 {
        return Ok(0.0);
    }
    Ok(gamma_fn(half) * gamma_fn(alpha - half) / gamma_fn(alpha))
}

/// The two closed-form expansion constants: the leading coefficient
/// `c_n = sqrt(pi) Gamma((n-1)/4) area(S^{n-2}) / ((n+1) Gamma((n+1)/4))`
/// and the `r^{n+3}` coefficient `e = (C_n area(S^{n-2}) / c^2) *
/// uniformity_residual`.
pub fn expansion_constants(frame: &QuadricFrame) -> Result<(f64, f64)> {
    let n = frame.n();
    let c_n = leading_area_constant(n)?;
    let bracket = uniformity_residual(&frame.d, &frame.x)?;
    let cal_n = second_kernel_constant(n);
    let e = cal_n * sphere_area(n - 2) / (frame.c * frame.c) * bracket;
    Ok((c_n, e))
}

/// `c_n` alone; `n = 1` returns the degenerate line-graph constant 2.
pub fn leading_area_constant(n: usize) -> Result<f64> {
    match n {
        0 => Err(Error::invalid("dimension must be positive")),
        1 => Ok(2.0),
        _ => Ok(std::f64::consts::PI.sqrt()
            * gamma_fn((n as f64 - 1.0) / 4.0)
            * sphere_area(n - 2)
            / ((n as f64 + 1.0) * gamma_fn((n as f64 + 1.0) / 4.0))),
    }
}

/// `C_n = sqrt(pi) Gamma((n+1)/4) / (((n+3)/4) Gamma((n+3)/4))`.
pub fn second_kernel_constant(n: usize) -> f64 {
    let nf = n as f64;
    std::f64::consts::PI.sqrt() * gamma_fn((nf + 1.0) / 4.0)
        / ((nf + 3.0) / 4.0 * gamma_fn((nf + 3.0) / 4.0))
}

/// The bracket of the `r^{n+3}` coefficient, evaluated at the horizontal
/// normal of `p`. A uniform measure carried by the quadric forces this to
/// vanish at every admissible point; a rank-one matrix yields `-1/4`
/// everywhere.
pub fn uniformity_residual(d: &DMatrix<f64>, p: &DVector<f64>) -> Result<f64> {
    let n = d.nrows();
    if n < 2 {
        return Err(Error::invalid("residual needs n >= 2"));
    }
    let dp = d * p;
    if dp.norm() <= 1e-14 {
        return Err(Error::invalid("point lies in the kernel"));
    }
    let normal = dp.clone() / dp.norm();
    let dn = d * &normal;
    let nd2n = dn.norm_squared();
    let ndn = normal.dot(&dn);
    let tr = d.trace();
    let tr2 = (d * d).trace();
    let nm1 = (n - 1) as f64;
    Ok((tr2 - 2.0 * nd2n + ndn * ndn) / (4.0 * nm1) - 0.25 - (tr - ndn) * (tr - ndn) / (8.0 * nm1))
}

/// Result of fitting `area / r^{n+1}` against `{1, r, r^2}`.
#[derive(Debug, Clone, Serialize)]
pub struct ExpansionFit {
    pub c_hat: f64,
    pub zeta_hat: f64,
    pub e_hat: f64,
    pub c_err: f64,
    pub zeta_err: f64,
    pub e_err: f64,
}

/// Weighted least squares of the area expansion over sampled radii.
/// Requires at least five radii spanning two octaves.
///
/// Rows are weighted by the truncation order of the quadratic model in the
/// reduced variable: after `area / r^{n+1} = c + zeta r + e r^2` the next
/// term is `O(r^3)`, so row `i` gets declared uncertainty `r_i^3`. The
/// coefficient errors then reflect lack of fit at that order.
pub fn fit_expansion(areas: &[(f64, f64)], n: usize) -> Result<ExpansionFit> {
    if areas.len() < 5 {
        return Err(Error::IllConditioned("need at least 5 radii".into()));
    }
    let rmin = areas.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let rmax = areas.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if !(rmin > 0.0) || rmax / rmin < 4.0 {
        return Err(Error::IllConditioned(
            "radii must span at least two octaves".into(),
        ));
    }
    let x = DMatrix::from_fn(areas.len(), 3, |i, j| areas[i].0.powi(j as i32));
    let y = DVector::from_iterator(
        areas.len(),
        areas.iter().map(|&(r, a)| a / r.powi(n as i32 + 1)),
    );
    let sigma: Vec<f64> = areas.iter().map(|&(r, _)| r * r * r).collect();
    let (beta, se) = least_squares(&x, &y, Some(&sigma))?;
    Ok(ExpansionFit {
        c_hat: beta[0],
        zeta_hat: beta[1],
        e_hat: beta[2],
        c_err: se[0],
        zeta_err: se[1],
        e_err: se[2],
    })
}

/// Line-graph ball area for `n = 1` (`t = d y^2` over the line), by direct
/// quadrature of the coarea weight over the shadow interval. Used to
/// cross-check the degenerate constant `c_1 = 2`.
pub fn area_line_graph(d: f64, x: f64, r: f64) -> Result<f64> {
    if d == 0.0 || !(r > 0.0) {
        return Err(Error::invalid("need d != 0 and r > 0"));
    }
    if (d * x).abs() <= 1e-14 {
        return Err(Error::invalid("base point lies in the kernel"));
    }
    let g = |w: f64| {
        let lin = 2.0 * d * x * w + d * w * w;
        w.powi(4) + lin * lin
    };
    let target = r.powi(4);
    let find = |sign: f64| -> Result<f64> {
        let mut hi = r.min(0.5 * x.abs());
        let mut grow = 0;
        while g(sign * hi) < target {
            hi *= 2.0;
            grow += 1;
            if grow > 60 {
                return Err(Error::RadiusOutOfRange("no bracket".into()));
            }
        }
        bisect(&|w| g(sign * w) - target, 0.0, hi, 1e-13)
    };
    let right = find(1.0)?;
    let left = find(-1.0)?;
    Ok(crate::numerics::adaptive_simpson(
        &|w: f64| 2.0 * (d * (x + w)).abs(),
        -left,
        right,
        1e-13,
    ))
}
