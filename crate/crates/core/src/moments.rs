//! Moments of uniform measures.
//!
//! The Koranyi norm is polarized by `V(u, z) = (|z|^4 + |u|^4 - |z-u|^4)/2`,
//! which splits into parts `2V = L + Q + T` that are 1-, 2-, and
//! 3-homogeneous in `u`. Gaussian-weighted integrals of powers of these
//! parts (the moments) constrain the support of a uniform measure; the
//! barycenter curves extracted from the quadratic part produce the
//! candidate quadric, and the smallest eigenvalue of the sixth-order
//! horizontal moment matrix separates flat from non-flat measures.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec;
use crate::geometry::{dot, Metric, Point};
use crate::measure::{MassEstimate, ParticleMeasure};
use crate::numerics::{gamma_fn, smallest_eigenpair, sym_operator_norm};

/// The polarization of the Koranyi norm and its graded parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizationParts {
    pub v: f64,
    pub l: f64,
    pub q: f64,
    pub t: f64,
}

/// `V(u, z)` with its decomposition `2V = L + Q + T`.
///
/// `V` is computed from the norms directly, so the decomposition identity
/// is a genuine check rather than a definition.
pub fn polarization(u: &Point, z: &Point) -> PolarizationParts {
    debug_assert_eq!(u.dim(), z.dim());
    let zh2: f64 = z.h.iter().map(|x| x * x).sum();
    let uh2: f64 = u.h.iter().map(|x| x * x).sum();
    let uz = dot(&u.h, &z.h);
    let l = 4.0 * zh2 * uz;
    let q = 2.0 * z.t * u.t - 4.0 * uz * uz - 2.0 * zh2 * uh2;
    let t = 4.0 * uh2 * uz;
    let nz = z.norm(Metric::Koranyi);
    let nu = u.norm(Metric::Koranyi);
    let nzu = z.sub(u).norm(Metric::Koranyi);
    let v = (nz.powi(4) + nu.powi(4) - nzu.powi(4)) / 2.0;
    PolarizationParts { v, l, q, t }
}

/// `C(h) = Gamma(h/4 + 1)`, the normalization of every moment integral.
pub fn moment_normalization(h: f64) -> f64 {
    gamma_fn(h / 4.0 + 1.0)
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// The `k`-th moment `b_{k,s}(u)` of the cloud, using the homogeneous
/// dimension carried by the measure. `b_0 = 1` by convention.
pub fn moment(mu: &ParticleMeasure, k: usize, s: f64, u: &Point) -> Result<MassEstimate> {
    if !(s > 0.0) {
        return Err(Error::invalid("moment scale must be positive"));
    }
    if k == 0 {
        return Ok(MassEstimate::exact(1.0));
    }
    let h = mu.hom_dim;
    let pref = s.powf(k as f64 + h / 4.0) / (factorial(k) * moment_normalization(h));
    let est = mu.integrate(|z| {
        let pol = polarization(u, z);
        (2.0 * pol.v).powi(k as i32) * (-s * z.norm(Metric::Koranyi).powi(4)).exp()
    })?;
    Ok(MassEstimate {
        value: pref * est.value,
        std_error: pref.abs() * est.std_error,
        n_samples: est.n_samples,
    })
}

/// The mixed moment `c_{alpha,s}(u)` for a multi-index over `(L, Q, T)`.
pub fn c_alpha(mu: &ParticleMeasure, alpha: [usize; 3], s: f64, u: &Point) -> Result<MassEstimate> {
    if alpha == [0, 0, 0] {
        return Err(Error::invalid("multi-index must be nonzero"));
    }
    if !(s > 0.0) {
        return Err(Error::invalid("moment scale must be positive"));
    }
    let h = mu.hom_dim;
    let total = (alpha[0] + alpha[1] + alpha[2]) as f64;
    let pref = s.powf(total + h / 4.0)
        / (factorial(alpha[0])
            * factorial(alpha[1])
            * factorial(alpha[2])
            * moment_normalization(h));
    let est = mu.integrate(|z| {
        let pol = polarization(u, z);
        pol.l.powi(alpha[0] as i32)
            * pol.q.powi(alpha[1] as i32)
            * pol.t.powi(alpha[2] as i32)
            * (-s * z.norm(Metric::Koranyi).powi(4)).exp()
    })?;
    Ok(MassEstimate {
        value: pref * est.value,
        std_error: pref.abs() * est.std_error,
        n_samples: est.n_samples,
    })
}

/// The barycenter curves at scale `s`: the horizontal barycenter `b(s)`,
/// the symmetric matrix `Q(s)` (sixth-order part minus second-order part),
/// and the vertical barycenter `T(s)`, all with per-entry standard errors.
#[derive(Debug, Clone)]
pub struct MomentCurves {
    pub s: f64,
    pub b: DVector<f64>,
    pub b_err: DVector<f64>,
    pub q: DMatrix<f64>,
    pub q_err: DMatrix<f64>,
    pub t: f64,
    pub t_err: f64,
}

pub fn moment_curves(mu: &ParticleMeasure, s: f64) -> Result<MomentCurves> {
    if !(s > 0.0) {
        return Err(Error::invalid("moment scale must be positive"));
    }
    let n = mu.ambient_dim();
    let count = mu.atoms.len();
    if count == 0 {
        return Err(Error::EmptyMeasure);
    }
    let h = mu.hom_dim;
    let ch = moment_normalization(h);
    let pref_b = 4.0 * s.powf(0.5 + h / 4.0) / ch;
    let pref_q1 = 8.0 * s.powf(1.5 + h / 4.0) / ch;
    let pref_q2 = s.powf(0.5 + h / 4.0) / ch;
    let pref_t = 2.0 * s.powf(1.0 + h / 4.0) / ch;

    // component layout: [ b_0..b_{n-1} | Q row-major n*n | T ]
    let m = n + n * n + 1;
    let nf = count as f64;
    let chunks = exec::map_chunks(count, exec::CHUNK, |range| {
        let mut sums = vec![0.0; m];
        let mut sqs = vec![0.0; m];
        let mut push = |idx: usize, x: f64| {
            sums[idx] += x;
            sqs[idx] += x * x;
        };
        for i in range {
            let a = &mu.atoms[i];
            let z = &a.point;
            let g = (-s * z.norm(Metric::Koranyi).powi(4)).exp();
            let w = nf * a.weight * g;
            let zh2: f64 = z.h.iter().map(|x| x * x).sum();
            for k in 0..n {
                push(k, pref_b * w * zh2 * z.h[k]);
            }
            for r in 0..n {
                for c in 0..n {
                    let outer = z.h[r] * z.h[c];
                    let q1 = pref_q1 * zh2 * zh2 * outer;
                    let q2 = pref_q2 * (4.0 * outer + if r == c { 2.0 * zh2 } else { 0.0 });
                    push(n + r * n + c, w * (q1 - q2));
                }
            }
            push(n + n * n, pref_t * w * z.t);
        }
        (sums, sqs)
    });
    let mut sums = vec![0.0; m];
    let mut sqs = vec![0.0; m];
    for (cs, cq) in chunks {
        for i in 0..m {
            sums[i] += cs[i];
            sqs[i] += cq[i];
        }
    }
    let mean: Vec<f64> = sums.iter().map(|x| x / nf).collect();
    let err: Vec<f64> = (0..m)
        .map(|i| {
            let var = ((sqs[i] - sums[i] * mean[i]).max(0.0)) / ((count - 1).max(1) as f64);
            (var / nf).sqrt()
        })
        .collect();
    Ok(MomentCurves {
        s,
        b: DVector::from_iterator(n, mean[..n].iter().copied()),
        b_err: DVector::from_iterator(n, err[..n].iter().copied()),
        q: DMatrix::from_fn(n, n, |r, c| mean[n + r * n + c]),
        q_err: DMatrix::from_fn(n, n, |r, c| err[n + r * n + c]),
        t: mean[n + n * n],
        t_err: err[n + n * n],
    })
}

/// The spectral flatness functional: the smallest eigenvalue of
/// `M = int |z_H|^4 z_H (x) z_H e^{-|z|^4} dmu(z)`, which equals the
/// infimum over unit horizontal directions of the quadratic form. The
/// standard error is that of the form at the minimizing direction.
pub fn flatness_functional(mu: &ParticleMeasure) -> Result<MassEstimate> {
    let n = mu.ambient_dim();
    if mu.atoms.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    let count = mu.atoms.len();
    let nf = count as f64;
    let chunks = exec::map_chunks(count, exec::CHUNK, |range| {
        let mut acc = vec![0.0; n * n];
        for i in range {
            let a = &mu.atoms[i];
            let z = &a.point;
            let zh2: f64 = z.h.iter().map(|x| x * x).sum();
            let w = a.weight * zh2 * zh2 * (-z.norm(Metric::Koranyi).powi(4)).exp();
            for r in 0..n {
                for c in 0..n {
                    acc[r * n + c] += w * z.h[r] * z.h[c];
                }
            }
        }
        acc
    });
    let mut acc = vec![0.0; n * n];
    for c in chunks {
        for i in 0..(n * n) {
            acc[i] += c[i];
        }
    }
    let m = DMatrix::from_fn(n, n, |r, c| acc[r * n + c]);
    let (lambda, u) = smallest_eigenpair(&m);
    // error of the scalar form along the minimizer
    let (s, s2) = exec::sum_and_sq(count, |i| {
        let a = &mu.atoms[i];
        let z = &a.point;
        let zh2: f64 = z.h.iter().map(|x| x * x).sum();
        let proj: f64 = (0..n).map(|k| u[k] * z.h[k]).sum();
        nf * a.weight * zh2 * zh2 * proj * proj * (-z.norm(Metric::Koranyi).powi(4)).exp()
    });
    let mean = s / nf;
    let var = ((s2 - s * mean).max(0.0)) / ((count - 1).max(1) as f64);
    Ok(MassEstimate {
        value: lambda,
        std_error: (var / nf).sqrt(),
        n_samples: count,
    })
}

/// `|sum_{k=1..4q} b_{k,s}(u) - sum_{k=1..q} s^k |u|^{4k} / k!|`.
pub fn expansion_residual(mu: &ParticleMeasure, u: &Point, s: f64, q: usize) -> Result<f64> {
    if q == 0 {
        return Err(Error::invalid("expansion order must be at least 1"));
    }
    let mut lhs = 0.0;
    for k in 1..=(4 * q) {
        lhs += moment(mu, k, s, u)?.value;
    }
    let nu4 = u.norm(Metric::Koranyi).powi(4);
    let mut rhs = 0.0;
    for k in 1..=q {
        rhs += (s * nu4).powi(k as i32) / factorial(k);
    }
    Ok((lhs - rhs).abs())
}

/// Operator norms of `Q(s)` along a decreasing grid of scales. A measure
/// is degeneracy-consistent when the trend goes to zero.
pub fn degeneracy_probe(mu: &ParticleMeasure, s_grid: &[f64]) -> Result<Vec<f64>> {
    if s_grid.iter().any(|s| *s <= 0.0) {
        return Err(Error::invalid("scales must be positive"));
    }
    if s_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("scales must be strictly decreasing"));
    }
    s_grid
        .iter()
        .map(|&s| Ok(sym_operator_norm(&moment_curves(mu, s)?.q)))
        .collect()
}

/// JSON-facing snapshot of the moment quantities at one scale.
#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub s: f64,
    pub b: Vec<f64>,
    pub b_stderr: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub q_stderr: Vec<Vec<f64>>,
    pub t: f64,
    pub t_stderr: f64,
    pub flatness: f64,
    pub flatness_stderr: f64,
}

pub fn moment_report(mu: &ParticleMeasure, s: f64) -> Result<MomentReport> {
    let curves = moment_curves(mu, s)?;
    let flat = flatness_functional(mu)?;
    let n = curves.b.len();
    Ok(MomentReport {
        s,
        b: curves.b.iter().copied().collect(),
        b_stderr: curves.b_err.iter().copied().collect(),
        q: (0..n)
            .map(|r| (0..n).map(|c| curves.q[(r, c)]).collect())
            .collect(),
        q_stderr: (0..n)
            .map(|r| (0..n).map(|c| curves.q_err[(r, c)]).collect())
            .collect(),
        t: curves.t,
        t_stderr: curves.t_err,
        flatness: flat.value,
        flatness_stderr: flat.std_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{dilate, VerticalHyperplane};
    use crate::measure::{MeasureModel, SampleConfig};
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn rand_point(rng: &mut ChaCha8Rng, n: usize) -> Point {
        Point::new(
            (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            rng.gen_range(-4.0..4.0),
        )
    }

    fn flat_cloud(n: usize, count: usize, seed: u64, spread: f64) -> ParticleMeasure {
        let mut normal = vec![0.0; n];
        normal[0] = 1.0;
        MeasureModel::FlatPlane {
            plane: VerticalHyperplane::new(normal, 0.0).unwrap(),
        }
        .sample(&SampleConfig {
            n_atoms: count,
            seed,
            spread,
            center: None,
        })
        .unwrap()
    }

    #[test]
    fn polarization_decomposition_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5000 {
            let u = rand_point(&mut rng, 3);
            let z = rand_point(&mut rng, 3);
            let p = polarization(&u, &z);
            assert_relative_eq!(
                2.0 * p.v,
                p.l + p.q + p.t,
                epsilon = 1e-9,
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn polarization_zero_at_origin() {
        let p = polarization(&Point::origin(2), &Point::new(vec![1.0, 2.0], 3.0));
        assert_eq!((p.v, p.l, p.q, p.t), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn polarization_swap_symmetry_and_homogeneity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let u = rand_point(&mut rng, 2);
            let z = rand_point(&mut rng, 2);
            let p = polarization(&u, &z);
            let swapped = polarization(&z, &u);
            assert_relative_eq!(p.l, swapped.t, max_relative = 1e-10, epsilon = 1e-10);
            let l = rng.gen_range(0.2..3.0);
            let pu = polarization(&dilate(&u, l).unwrap(), &z);
            assert_relative_eq!(pu.l, l * p.l, max_relative = 1e-10, epsilon = 1e-10);
            assert_relative_eq!(pu.q, l * l * p.q, max_relative = 1e-10, epsilon = 1e-10);
            assert_relative_eq!(pu.t, l * l * l * p.t, max_relative = 1e-10, epsilon = 1e-9);
        }
    }

    #[test]
    fn polarization_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let u = rand_point(&mut rng, 3);
            let z = rand_point(&mut rng, 3);
            let p = polarization(&u, &z);
            let nu = u.norm(Metric::Koranyi);
            let nz = z.norm(Metric::Koranyi);
            let slack = 1.0 + 1e-9;
            assert!(p.l.abs() <= 4.0 * nu * nz.powi(3) * slack);
            assert!(p.q.abs() <= 8.0 * nz * nz * nu * nu * slack);
            assert!(p.t.abs() <= 4.0 * nz * nu.powi(3) * slack);
            assert!(p.v.abs() <= 2.0 * nu * nz * (nu + nz) * (nu + nz) * slack);
        }
    }

    #[test]
    fn moment_zero_is_one_and_vanishes_at_origin() {
        let mu = flat_cloud(2, 5000, 1, 2.5);
        assert_eq!(moment(&mu, 0, 1.0, &Point::origin(2)).unwrap().value, 1.0);
        for k in 1..4 {
            let m = moment(&mu, k, 1.0, &Point::origin(2)).unwrap();
            assert_eq!(m.value, 0.0);
        }
    }

    #[test]
    fn moment_bound_prop_style() {
        let mu = flat_cloud(2, 40_000, 2, 2.5);
        let h = mu.hom_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..12 {
            let k = rng.gen_range(1..=4usize);
            let s = rng.gen_range(0.3..2.0);
            let mut u = rand_point(&mut rng, 2);
            u.h[0] = 0.0; // keep u on the support
            let est = moment(&mu, k, s, &u).unwrap();
            let nu = u.norm(Metric::Koranyi);
            let x = nu * s.powf(0.25);
            let bound = 16f64.powi(k as i32) * x.powi(k as i32) / factorial(k)
                * gamma_fn((h + 3.0 * k as f64) / 4.0)
                / gamma_fn(h / 4.0)
                * (x.powi(2 * k as i32) + 1.0);
            assert!(
                est.value.abs() <= bound + 3.0 * est.std_error,
                "k={k} s={s}: {} vs bound {bound}",
                est.value
            );
        }
    }

    #[test]
    fn splitter_identity_exact_on_shared_cloud() {
        // (L+Q+T)^k expands exactly into the multinomial sum, so on a
        // shared sample cloud the identity holds to rounding.
        let mu = flat_cloud(2, 3000, 3, 2.0);
        let u = Point::new(vec![0.0, 0.7], 0.4);
        let s = 0.9;
        for k in 1..=3usize {
            let b = moment(&mu, k, s, &u).unwrap().value;
            let mut sum = 0.0;
            for a1 in 0..=k {
                for a2 in 0..=(k - a1) {
                    let a3 = k - a1 - a2;
                    sum += c_alpha(&mu, [a1, a2, a3], s, &u).unwrap().value;
                }
            }
            assert_relative_eq!(b, sum, max_relative = 1e-10, epsilon = 1e-12);
        }
    }

    #[test]
    fn c_alpha_dilation_scaling_on_flat_measure() {
        let mu = flat_cloud(2, 60_000, 4, 3.0);
        let u = Point::new(vec![0.0, 0.8], -0.5);
        for alpha in [[1, 0, 0], [0, 1, 0], [2, 0, 0], [1, 0, 1]] {
            let base = c_alpha(&mu, alpha, 1.0, &u).unwrap();
            for s in [0.5, 2.0] {
                let scaled = c_alpha(&mu, alpha, s, &u).unwrap();
                let weight = (alpha[0] + 2 * alpha[1] + 3 * alpha[2]) as f64;
                let predicted = s.powf(weight / 4.0) * base.value;
                let tol = 3.0 * (scaled.std_error + s.powf(weight / 4.0) * base.std_error);
                assert!(
                    (scaled.value - predicted).abs() <= tol.max(1e-9),
                    "alpha {alpha:?} s={s}: {} vs {predicted}",
                    scaled.value
                );
            }
        }
    }

    #[test]
    fn quartic_identity_on_flat_measure() {
        let mu = flat_cloud(2, 120_000, 5, 2.5);
        let u = Point::new(vec![0.0, 1.1], 0.8);
        let mut total = 0.0;
        let mut err = 0.0;
        for alpha in [[4, 0, 0], [2, 1, 0], [0, 2, 0], [1, 0, 1]] {
            let est = c_alpha(&mu, alpha, 1.0, &u).unwrap();
            total += est.value;
            err += est.std_error;
        }
        let target = u.norm(Metric::Koranyi).powi(4);
        assert!(
            (total - target).abs() <= 3.0 * err,
            "quartic sum {total} vs {target} (err {err})"
        );
    }

    #[test]
    fn gaussian_radial_integrals_closed_form() {
        // int |z - u|^p e^{-s |z-u|^4} dmu = (h/4) s^{-(h+p)/4} Gamma((h+p)/4)
        let cases: Vec<(ParticleMeasure, Point)> = vec![
            (
                flat_cloud(2, 150_000, 6, 3.0),
                Point::new(vec![0.0, 0.4], 0.2),
            ),
            (
                MeasureModel::VerticalLine {
                    base: Point::origin(2),
                }
                .sample(&SampleConfig {
                    n_atoms: 150_000,
                    seed: 6,
                    spread: 2.0,
                    center: None,
                })
                .unwrap(),
                Point::new(vec![0.0, 0.0], 0.3),
            ),
        ];
        for (mu, u) in &cases {
            let h = mu.hom_dim;
            for p in [0.0, 2.0, 4.0] {
                for s in [0.5, 1.0, 2.0] {
                    let est = mu
                        .integrate(|z| {
                            let d = z.sub(u).norm(Metric::Koranyi);
                            d.powf(p) * (-s * d.powi(4)).exp()
                        })
                        .unwrap();
                    let exact = h / 4.0 * s.powf(-(h + p) / 4.0) * gamma_fn((h + p) / 4.0);
                    assert!(
                        est.within(exact, 3.0),
                        "h={h} p={p} s={s}: {} +- {} vs {exact}",
                        est.value,
                        est.std_error
                    );
                }
            }
        }
    }

    #[test]
    fn moment_curves_flat_measure_constraints() {
        let mu = flat_cloud(2, 150_000, 7, 2.5);
        let curves = moment_curves(&mu, 1.0).unwrap();
        for k in 0..2 {
            assert!(
                curves.b[k].abs() <= 3.0 * curves.b_err[k],
                "b[{k}] = {} +- {}",
                curves.b[k],
                curves.b_err[k]
            );
        }
        assert!(curves.t.abs() <= 3.0 * curves.t_err);
        // in-plane direction e2: <e2, Q e2> must vanish
        let q22 = curves.q[(1, 1)];
        assert!(q22.abs() <= 3.0 * curves.q_err[(1, 1)], "{q22}");
    }

    #[test]
    fn moment_curves_vertical_line_all_zero_q() {
        let mu = MeasureModel::VerticalLine {
            base: Point::origin(2),
        }
        .sample(&SampleConfig::new(20_000, 8))
        .unwrap();
        let curves = moment_curves(&mu, 0.7).unwrap();
        assert_eq!(curves.q[(0, 0)], 0.0);
        assert_eq!(curves.q[(1, 1)], 0.0);
        let probe = degeneracy_probe(&mu, &[1.0, 0.5, 0.25]).unwrap();
        assert!(probe.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn flatness_zero_on_flat_and_vertical() {
        let flat = flat_cloud(2, 50_000, 9, 2.0);
        let f = flatness_functional(&flat).unwrap();
        assert!(
            f.value.abs() <= 3.0 * f.std_error.max(1e-12),
            "{} +- {}",
            f.value,
            f.std_error
        );
        let line = MeasureModel::VerticalLine {
            base: Point::origin(2),
        }
        .sample(&SampleConfig::new(10_000, 10))
        .unwrap();
        let f = flatness_functional(&line).unwrap();
        assert_eq!(f.value, 0.0);
    }

    #[test]
    fn flatness_positive_on_light_cone_across_seeds() {
        let model = MeasureModel::KpConeProduct { n: 4 };
        let mut intervals = Vec::new();
        for seed in 0..5 {
            let mu = model
                .sample(&SampleConfig {
                    n_atoms: 60_000,
                    seed,
                    spread: 1.5,
                    center: None,
                })
                .unwrap();
            let f = flatness_functional(&mu).unwrap();
            assert!(
                f.value > 5.0 * f.std_error,
                "seed {seed}: {} +- {}",
                f.value,
                f.std_error
            );
            intervals.push((f.value - 3.0 * f.std_error, f.value + 3.0 * f.std_error));
        }
        let lo = intervals
            .iter()
            .map(|i| i.0)
            .fold(f64::NEG_INFINITY, f64::max);
        let hi = intervals.iter().map(|i| i.1).fold(f64::INFINITY, f64::min);
        assert!(
            lo <= hi,
            "confidence intervals do not overlap: {intervals:?}"
        );
    }

    #[test]
    fn flatness_matches_sphere_grid_oracle() {
        // eigen route vs derivative-free minimization over the sphere
        let mu = MeasureModel::KpConeProduct { n: 4 }
            .sample(&SampleConfig {
                n_atoms: 30_000,
                seed: 3,
                spread: 1.5,
                center: None,
            })
            .unwrap();
        let n = 4;
        let mut m: DMatrix<f64> = DMatrix::zeros(n, n);
        for a in &mu.atoms {
            let zh2: f64 = a.point.h.iter().map(|x| x * x).sum();
            let w = a.weight * zh2 * zh2 * (-a.point.norm(Metric::Koranyi).powi(4)).exp();
            for r in 0..n {
                for c in 0..n {
                    m[(r, c)] += w * a.point.h[r] * a.point.h[c];
                }
            }
        }
        let lambda = flatness_functional(&mu).unwrap().value;
        // 10^4-point grid, then shrinking tangent-space polish
        let grid = crate::numerics::sphere_grid(n, 10_000);
        let form = |u: &[f64]| -> f64 {
            let mut acc = 0.0;
            for r in 0..n {
                for c in 0..n {
                    acc += u[r] * m[(r, c)] * u[c];
                }
            }
            acc
        };
        let mut best = grid
            .iter()
            .min_by(|a, b| form(a).partial_cmp(&form(b)).unwrap())
            .unwrap()
            .clone();
        let mut best_val = form(&best);
        let mut step = 0.1;
        let dirs = crate::numerics::sphere_grid(n, 64);
        for _ in 0..60 {
            let mut improved = false;
            for d in &dirs {
                let mut cand: Vec<f64> = best.iter().zip(d).map(|(a, b)| a + step * b).collect();
                let norm = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
                cand.iter_mut().for_each(|x| *x /= norm);
                let v = form(&cand);
                if v < best_val {
                    best_val = v;
                    best = cand;
                    improved = true;
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        assert!(
            (lambda - best_val).abs() <= 1e-9 * best_val.max(1.0),
            "eigen {lambda} vs grid {best_val}"
        );
    }

    #[test]
    fn expansion_residual_zero_at_origin() {
        let mu = flat_cloud(2, 2000, 11, 2.0);
        let r = expansion_residual(&mu, &Point::origin(2), 0.5, 1).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn expansion_residual_scaling_law() {
        let mu = flat_cloud(2, 200_000, 12, 5.0);
        let u = Point::new(vec![0.0, 1.0], 0.5);
        let mut pts = Vec::new();
        for k in 0..=6 {
            let s = 0.1 * 0.5f64.powi(k);
            let res = expansion_residual(&mu, &u, s, 1).unwrap();
            pts.push((s, res));
        }
        let slope = crate::numerics::loglog_slope(&pts);
        assert!(slope >= 1.20, "residual slope {slope}, points {pts:?}");
        // fit the constant by max-ratio on even points, verify on odd ones
        let nu4 = u.norm(Metric::Koranyi).powi(4);
        let envelope = |s: f64| (s * nu4).powf(1.25) * (2.0 + (s * nu4).powi(2));
        let g = pts
            .iter()
            .step_by(2)
            .map(|&(s, r)| r / envelope(s))
            .fold(f64::NEG_INFINITY, f64::max);
        for &(s, r) in pts.iter().skip(1).step_by(2) {
            assert!(
                r <= 1.25 * g * envelope(s) + 1e-12,
                "s={s}: {r} vs fitted envelope"
            );
        }
    }

    #[test]
    fn degeneracy_probe_quadric_graph_bounded_away_from_zero() {
        let model = MeasureModel::QuadricGraph {
            d: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            b: vec![0.0, 0.0],
        };
        let mu = model
            .sample(&SampleConfig {
                n_atoms: 120_000,
                seed: 13,
                spread: 3.5,
                center: None,
            })
            .unwrap();
        let grid = [2.0, 1.0, 0.5, 0.25, 0.125];
        let norms = degeneracy_probe(&mu, &grid).unwrap();
        for (s, v) in grid.iter().zip(&norms) {
            assert!(*v > 1e-3 && *v < 1e3, "s={s}: |Q(s)| = {v}");
        }
    }
}
