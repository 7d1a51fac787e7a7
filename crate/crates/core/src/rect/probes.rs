//! Probe operators: a weak-constant-density check, the truncated
//! odd-kernel operator of the touching-point argument, and the density
//! square function.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec;
use crate::geometry::{distance, Metric, Point};
use crate::measure::ParticleMeasure;

/// Outcome of the weak-constant-density probe.
///
/// The probe tests one explicit candidate: `sigma = mu / theta_bar`, with
/// `theta_bar` the mean density ratio over sampled (point, scale) pairs in
/// the ball. Passing is sufficient for the pair `(x, r)` to behave like a
/// constant-density window at tolerance `eps`; failure does not certify
/// the contrary, since the candidate is not exhaustive.
#[derive(Debug, Clone, Serialize)]
pub struct WcdReport {
    pub pass: bool,
    pub theta_bar: f64,
    pub worst_deviation: f64,
    pub tolerance: f64,
    pub checks: usize,
}

pub fn wcd_probe(
    mu: &ParticleMeasure,
    x: &Point,
    r: f64,
    eps: f64,
    seed: u64,
) -> Result<WcdReport> {
    if !(r > 0.0) || !(eps > 0.0) {
        return Err(Error::invalid("radius and tolerance must be positive"));
    }
    let h = mu.hom_dim;
    let in_ball: Vec<usize> = (0..mu.atoms.len())
        .filter(|&i| {
            distance(&mu.atoms[i].point, x, Metric::Koranyi)
                .map(|d| d <= r)
                .unwrap_or(false)
        })
        .collect();
    if in_ball.is_empty() {
        return Err(Error::EmptyBall);
    }
    // scales below the cloud's resolution produce meaningless mass ratios
    let t_floor = r * (RESOLUTION_ATOMS / in_ball.len() as f64).powf(1.0 / h);
    if t_floor >= 0.9 * r {
        return Err(Error::invalid(format!(
            "cloud resolves only {} atoms in B(x, {r}); probe needs a larger budget",
            in_ball.len()
        )));
    }
    let draw = |rng: &mut ChaCha8Rng| -> (Point, f64) {
        let idx = in_ball[rng.gen_range(0..in_ball.len())];
        let y = mu.atoms[idx].point.clone();
        let t = rng.gen_range(t_floor..r);
        (y, t)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta_sum = 0.0;
    const PROBES: usize = 64;
    for _ in 0..PROBES {
        let (y, t) = draw(&mut rng);
        let mass = mu.ball_mass(&y, t, Metric::Koranyi)?;
        theta_sum += mass.value / t.powf(h);
    }
    let theta_bar = theta_sum / PROBES as f64;
    if !(theta_bar > 0.0) {
        return Err(Error::EmptyBall);
    }
    let mut worst = 0.0f64;
    for _ in 0..PROBES {
        let (y, t) = draw(&mut rng);
        let mass = mu.ball_mass(&y, t, Metric::Koranyi)?;
        let dev = (mass.value / theta_bar - t.powf(h)).abs();
        worst = worst.max(dev);
    }
    let tolerance = eps * r.powf(h);
    Ok(WcdReport {
        pass: worst <= tolerance,
        theta_bar,
        worst_deviation: worst,
        tolerance,
        checks: PROBES,
    })
}

/// A vector estimate with per-component standard errors.
#[derive(Debug, Clone, Serialize)]
pub struct VectorEstimate {
    pub value: Vec<f64>,
    pub std_error: Vec<f64>,
    pub n_samples: usize,
}

/// The truncated odd-kernel operator over the annulus `r < |z - y| <= s`:
/// the integral of `|z_H - y_H|^2 (z_H - y_H) / |z - y|^{n+4}`.
///
/// `s = r` gives an empty annulus and the zero vector; `r > s` is an
/// error.
pub fn r_operator(mu: &ParticleMeasure, z: &Point, r: f64, s: f64) -> Result<VectorEstimate> {
    if !(r > 0.0) {
        return Err(Error::invalid("inner radius must be positive"));
    }
    if r > s {
        return Err(Error::invalid("annulus needs r <= s"));
    }
    let n = mu.ambient_dim();
    if mu.atoms.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    if r == s {
        return Ok(VectorEstimate {
            value: vec![0.0; n],
            std_error: vec![0.0; n],
            n_samples: 0,
        });
    }
    let count = mu.atoms.len();
    let nf = count as f64;
    let chunks = exec::map_chunks(count, exec::CHUNK, |range| {
        let mut sums = vec![0.0; n];
        let mut sqs = vec![0.0; n];
        for i in range {
            let a = &mu.atoms[i];
            let d = distance(z, &a.point, Metric::Koranyi).unwrap();
            if d <= r || d > s {
                continue;
            }
            let dh: Vec<f64> = z.h.iter().zip(&a.point.h).map(|(p, q)| p - q).collect();
            let dh2: f64 = dh.iter().map(|x| x * x).sum();
            let scale = nf * a.weight * dh2 / d.powi(n as i32 + 4);
            for k in 0..n {
                let v = scale * dh[k];
                sums[k] += v;
                sqs[k] += v * v;
            }
        }
        (sums, sqs)
    });
    let mut sums = vec![0.0; n];
    let mut sqs = vec![0.0; n];
    for (cs, cq) in chunks {
        for k in 0..n {
            sums[k] += cs[k];
            sqs[k] += cq[k];
        }
    }
    let value: Vec<f64> = sums.iter().map(|x| x / nf).collect();
    let std_error: Vec<f64> = (0..n)
        .map(|k| {
            let var = ((sqs[k] - sums[k] * value[k]).max(0.0)) / ((count - 1).max(1) as f64);
            (var / nf).sqrt()
        })
        .collect();
    Ok(VectorEstimate {
        value,
        std_error,
        n_samples: count,
    })
}

/// Worst normalized inner product of the touching-point argument:
/// `sup_{x in B(z,r) cap supp} |<(x_H - z_H)/r, R_{r,s} mu(z)>|`.
pub fn touching_point_sup(mu: &ParticleMeasure, z: &Point, r: f64, s: f64) -> Result<f64> {
    let op = r_operator(mu, z, r, s)?;
    let mut sup = 0.0f64;
    for a in &mu.atoms {
        let d = distance(z, &a.point, Metric::Koranyi).unwrap();
        if d > r {
            continue;
        }
        let ip: f64 = a
            .point
            .h
            .iter()
            .zip(&z.h)
            .zip(&op.value)
            .map(|((xh, zh), rv)| (xh - zh) / r * rv)
            .sum();
        sup = sup.max(ip.abs());
    }
    Ok(sup)
}

/// Atom count that defines the resolution scale of a cloud: below the
/// radius holding this many atoms, density ratios are sampling noise.
const RESOLUTION_ATOMS: f64 = 128.0;

/// Log-spaced quadrature of the density square function
/// `int_0^R |mu(B(x,r))/r^h - mu(B(x,2r))/(2^h r^h)|^q dr/r`.
///
/// The lower limit is the resolution scale of the cloud around `x`.
/// `nodes_per_decade` defaults to 32 in the CLI.
pub fn density_square_function(
    mu: &ParticleMeasure,
    x: &Point,
    big_r: f64,
    q: f64,
    nodes_per_decade: usize,
) -> Result<f64> {
    if !(big_r > 0.0) || !(q > 0.0) {
        return Err(Error::invalid("R and q must be positive"));
    }
    if nodes_per_decade < 2 {
        return Err(Error::invalid("need at least 2 nodes per decade"));
    }
    let h = mu.hom_dim;
    let n_in = mu
        .atoms
        .iter()
        .filter(|a| {
            distance(&a.point, x, Metric::Koranyi)
                .map(|d| d <= big_r)
                .unwrap_or(false)
        })
        .count();
    if n_in == 0 {
        return Err(Error::EmptyBall);
    }
    let r_min = big_r * (RESOLUTION_ATOMS / n_in as f64).powf(1.0 / h);
    if r_min >= 0.9 * big_r {
        return Err(Error::invalid(format!(
            "cloud resolves only {n_in} atoms in B(x, {big_r}); radius too small for this budget"
        )));
    }
    let decades = (big_r / r_min).log10();
    let nodes = ((decades * nodes_per_decade as f64).ceil() as usize).max(2);
    let lg_lo = r_min.ln();
    let lg_hi = big_r.ln();
    let step = (lg_hi - lg_lo) / nodes as f64;
    let integrand: Vec<f64> = exec::map_indexed(nodes + 1, |i| {
        let r = (lg_lo + i as f64 * step).exp();
        let m1 = mu
            .ball_mass(x, r, Metric::Koranyi)
            .map(|e| e.value)
            .unwrap_or(0.0);
        let m2 = mu
            .ball_mass(x, 2.0 * r, Metric::Koranyi)
            .map(|e| e.value)
            .unwrap_or(0.0);
        let dens1 = m1 / r.powf(h);
        let dens2 = m2 / (2f64.powf(h) * r.powf(h));
        (dens1 - dens2).abs().powf(q)
    });
    // trapezoid in ln r
    let mut acc = 0.0;
    for i in 0..nodes {
        acc += 0.5 * (integrand[i] + integrand[i + 1]) * step;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::VerticalHyperplane;
    use crate::measure::{MeasureModel, SampleConfig};

    fn flat_cloud(count: usize, seed: u64, spread: f64) -> ParticleMeasure {
        MeasureModel::FlatPlane {
            plane: VerticalHyperplane::new(vec![1.0, 0.0], 0.0).unwrap(),
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
    fn wcd_passes_on_flat_cloud() {
        let mu = flat_cloud(120_000, 1, 1.2);
        let report = wcd_probe(&mu, &Point::origin(2), 0.8, 0.05, 7).unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn wcd_fails_on_two_far_planes() {
        let mut mu = flat_cloud(40_000, 2, 1.2);
        let far = {
            let mut other = flat_cloud(40_000, 3, 1.2);
            for a in &mut other.atoms {
                a.point.h[0] += 1.0;
            }
            other
        };
        mu.atoms.extend(far.atoms);
        let report = wcd_probe(&mu, &Point::origin(2), 1.0, 0.01, 8).unwrap();
        assert!(!report.pass, "{report:?}");
        assert!(report.worst_deviation > report.tolerance);
    }

    #[test]
    fn wcd_passes_on_light_cone() {
        let model = MeasureModel::KpConeProduct { n: 4 };
        let mu = model
            .sample(&SampleConfig {
                n_atoms: 150_000,
                seed: 3,
                spread: 0.9,
                center: None,
            })
            .unwrap();
        let x = Point::origin(4);
        let report = wcd_probe(&mu, &x, 0.6, 0.05, 11).unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn square_function_trace_on_light_cone() {
        // uniform measure: the square function is a noise-level trace at
        // and away from the vertex; recorded, with only finiteness and a
        // no-blow-up comparison asserted
        let model = MeasureModel::KpConeProduct { n: 4 };
        let near = Point::new(vec![0.2, 0.0, 0.0, 0.2], 0.0);
        let far = Point::new(vec![0.6, 0.0, 0.0, 0.6], 0.0);
        let mut vals = Vec::new();
        for (k, x) in [&near, &far].into_iter().enumerate() {
            let mu = model
                .sample(&SampleConfig {
                    n_atoms: 150_000,
                    seed: 40 + k as u64,
                    spread: 0.35,
                    center: Some(x.clone()),
                })
                .unwrap();
            let v = density_square_function(&mu, x, 0.25, 2.0, 32).unwrap();
            assert!(v.is_finite());
            vals.push(v);
        }
        println!(
            "light-cone square function: near vertex {:.4}, away {:.4}",
            vals[0], vals[1]
        );
        assert!(vals[1] <= 1.5 * vals[0] + 0.05, "{vals:?}");
    }

    #[test]
    fn r_operator_empty_annulus_is_zero() {
        let mu = flat_cloud(1000, 4, 1.0);
        let v = r_operator(&mu, &Point::origin(2), 0.5, 0.5).unwrap();
        assert_eq!(v.value, vec![0.0, 0.0]);
        assert!(r_operator(&mu, &Point::origin(2), 0.6, 0.5).is_err());
    }

    #[test]
    fn r_operator_vanishes_on_flat_plane() {
        let mu = flat_cloud(200_000, 5, 2.0);
        for (r, s) in [(0.25, 1.0), (0.5, 2.0)] {
            let v = r_operator(&mu, &Point::origin(2), r, s).unwrap();
            for k in 0..2 {
                assert!(
                    v.value[k].abs() <= 3.0 * v.std_error[k].max(1e-12),
                    "component {k}: {} +- {}",
                    v.value[k],
                    v.std_error[k]
                );
            }
        }
    }

    #[test]
    fn touching_point_bounded_across_scales() {
        let mu = flat_cloud(100_000, 6, 3.0);
        let n = 2;
        let cap = 2f64.powi(n as i32 + 2);
        let r = 0.25;
        for k in 1..=6 {
            let s = r * 2f64.powi(k);
            let sup = touching_point_sup(&mu, &Point::origin(n), r, s).unwrap();
            assert!(sup <= cap, "s/r = 2^{k}: sup {sup} vs cap {cap}");
        }
    }

    #[test]
    fn square_function_small_on_flat_cloud() {
        // the floor is sampling noise of the density ratios near the
        // resolution cutoff, about 1/RESOLUTION_ATOMS per log unit
        let mu = flat_cloud(150_000, 7, 1.0);
        let v = density_square_function(&mu, &Point::origin(2), 0.5, 2.0, 32).unwrap();
        assert!(v < 0.01, "square function {v}");
    }

    #[test]
    fn square_function_scale_covariant_under_blowup() {
        let mu = flat_cloud(150_000, 8, 1.5);
        let x = Point::origin(2);
        let direct = density_square_function(&mu, &x, 0.5, 2.0, 32).unwrap();
        let blown = mu.blowup(&x, 0.5, 3.0).unwrap();
        let rescaled = density_square_function(&blown, &x, 1.0, 2.0, 32).unwrap();
        assert!(
            (direct - rescaled).abs() <= 0.02 * direct.max(1e-3),
            "{direct} vs {rescaled}"
        );
    }

    #[test]
    fn square_function_positive_off_uniform_support() {
        // two planes separated by half the window: the density ratio jumps
        // across the gap scale, well above the flat sampling-noise floor
        let mut mu = flat_cloud(60_000, 9, 1.2);
        let far = {
            let mut other = flat_cloud(60_000, 10, 1.2);
            for a in &mut other.atoms {
                a.point.h[0] += 0.4;
            }
            other
        };
        mu.atoms.extend(far.atoms);
        for a in &mut mu.atoms {
            a.weight *= 0.5;
        }
        let v = density_square_function(&mu, &Point::origin(2), 0.8, 2.0, 32).unwrap();
        let flat = flat_cloud(120_000, 11, 1.2);
        let v_flat = density_square_function(&flat, &Point::origin(2), 0.8, 2.0, 32).unwrap();
        assert!(v > 4.0 * v_flat, "two-plane {v} vs flat {v_flat}");
    }

    #[test]
    fn r_operator_weights_respected() {
        // doubling all weights doubles the vector exactly
        let mu = flat_cloud(5000, 12, 1.5);
        let mut doubled = mu.clone();
        for a in &mut doubled.atoms {
            a.weight *= 2.0;
        }
        let z = Point::new(vec![0.0, 0.1], 0.05);
        let v1 = r_operator(&mu, &z, 0.2, 1.0).unwrap();
        let v2 = r_operator(&doubled, &z, 0.2, 1.0).unwrap();
        for k in 0..2 {
            assert!((v2.value[k] - 2.0 * v1.value[k]).abs() < 1e-12);
        }
    }
}
