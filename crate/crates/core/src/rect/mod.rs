//! Flatness statistics of sampled supports: one-sided and bilateral beta
//! numbers, parabolic dyadic cubes, Carleson sums, and the probe
//! operators used in touching-point arguments.

pub mod cubes;
pub mod probes;

pub use cubes::{carleson_bwgl, cube_tree_jsonl, dyadic_decompose, Cube, CubeOptions, CubeTree};
pub use probes::{density_square_function, r_operator, wcd_probe, VectorEstimate, WcdReport};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec;
use crate::geometry::{distance, dot, orthonormal_complement, Metric, Point, VerticalHyperplane};
use crate::measure::ParticleMeasure;
use crate::numerics::sphere_grid;

/// One-sided and bilateral beta numbers of a ball, with the minimizing
/// vertical hyperplane.
#[derive(Debug, Clone)]
pub struct BetaPair {
    pub beta: f64,
    pub bbeta: f64,
    pub best_plane: VerticalHyperplane,
}

/// Search budget for the sphere minimization and the plane sampling.
#[derive(Debug, Clone)]
pub struct BetaOptions {
    /// Plane points sampled per ball for the bilateral part.
    pub plane_samples: usize,
    /// Coarse unit-normal candidates; zero picks `64 * 2^n`.
    pub coarse_count: usize,
    /// Local refinement steps.
    pub refine_steps: usize,
    /// Directions probed per refinement step.
    pub refine_width: usize,
    /// Cap on atoms used for nearest-distance queries during the coarse
    /// scan (the final evaluation uses all atoms near the ball).
    pub coarse_atom_cap: usize,
    pub seed: u64,
}

impl Default for BetaOptions {
    fn default() -> Self {
        BetaOptions {
            plane_samples: 1000,
            coarse_count: 0,
            refine_steps: 20,
            refine_width: 4,
            coarse_atom_cap: 2000,
            seed: 0xbe7a,
        }
    }
}

impl BetaOptions {
    /// Reduced budget for per-cube evaluation over whole trees.
    pub fn per_cube() -> Self {
        BetaOptions {
            plane_samples: 256,
            coarse_count: 64,
            refine_steps: 6,
            refine_width: 4,
            coarse_atom_cap: 1500,
            seed: 0xbe7a,
        }
    }

    /// Minimal budget for traces.
    pub fn fast() -> Self {
        BetaOptions {
            plane_samples: 200,
            coarse_count: 32,
            refine_steps: 5,
            refine_width: 4,
            coarse_atom_cap: 1000,
            seed: 0xbe7a,
        }
    }
}

/// Atoms sorted by time coordinate, for pruned nearest-atom queries. The
/// Koranyi distance dominates `|dt|^{1/2}`, so a query can stop as soon as
/// the time offset alone exceeds the current best.
pub(crate) struct NearestIndex<'a> {
    points: Vec<&'a Point>,
    order: Vec<usize>,
}

impl<'a> NearestIndex<'a> {
    pub fn new<I: IntoIterator<Item = &'a Point>>(points: I) -> Self {
        let points: Vec<&Point> = points.into_iter().collect();
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| points[a].t.partial_cmp(&points[b].t).unwrap());
        NearestIndex { points, order }
    }

    /// Distance to the nearest indexed point.
    pub fn nearest(&self, p: &Point, m: Metric) -> f64 {
        if self.points.is_empty() {
            return f64::INFINITY;
        }
        let pos = self.order.partition_point(|&i| self.points[i].t < p.t);
        let mut best = f64::INFINITY;
        let mut lo = pos as isize - 1;
        let mut hi = pos;
        loop {
            let lo_dt = if lo >= 0 {
                (p.t - self.points[self.order[lo as usize]].t).abs()
            } else {
                f64::INFINITY
            };
            let hi_dt = if hi < self.order.len() {
                (p.t - self.points[self.order[hi]].t).abs()
            } else {
                f64::INFINITY
            };
            if lo_dt.min(hi_dt).sqrt() >= best {
                break;
            }
            let idx = if lo_dt <= hi_dt {
                let i = self.order[lo as usize];
                lo -= 1;
                i
            } else {
                let i = self.order[hi];
                hi += 1;
                i
            };
            let d = distance(p, self.points[idx], m).unwrap_or(f64::INFINITY);
            if d < best {
                best = d;
            }
        }
        best
    }
}

struct BallData<'a> {
    center: &'a Point,
    r: f64,
    /// Horizontal coordinates of support atoms inside the ball.
    in_ball: Vec<&'a [f64]>,
    /// Nearest-distance index over atoms within 3r.
    near_full: NearestIndex<'a>,
    near_coarse: NearestIndex<'a>,
}

fn spread_objective(data: &BallData, u: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for h in &data.in_ball {
        let p = dot(u, h);
        lo = lo.min(p);
        hi = hi.max(p);
    }
    ((hi - lo) / (2.0 * data.r), 0.5 * (hi + lo))
}

/// Sup over sampled plane points in the ball of the distance to the
/// support, over `r`. Stratified over the in-plane radius and the time
/// coordinate.
fn plane_sup(data: &BallData, u: &[f64], c: f64, samples: usize, coarse: bool, seed: u64) -> f64 {
    let n = u.len();
    let center = data.center;
    let r = data.r;
    let delta = dot(u, &center.h) - c;
    if delta.abs() >= r {
        return f64::INFINITY; // plane misses the ball
    }
    let basis = orthonormal_complement(u);
    let foot: Vec<f64> = (0..n).map(|k| c * u[k]).collect();
    let w0: Vec<f64> = basis
        .iter()
        .map(|w| dot(w, &center.h) - dot(w, &foot))
        .collect();
    let rho_max2 = (r * r - delta * delta).max(0.0);
    let k_rho = (samples as f64).sqrt().ceil() as usize;
    let k_t = samples.div_ceil(k_rho);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let index = if coarse {
        &data.near_coarse
    } else {
        &data.near_full
    };
    let mut sup = 0.0f64;
    for i in 0..k_rho {
        for j in 0..k_t {
            let rho2 = rho_max2 * ((i as f64 + rng.gen::<f64>()) / k_rho as f64);
            let plane_r2 = delta * delta + rho2;
            let t_half = (r.powi(4) - plane_r2 * plane_r2).max(0.0).sqrt();
            let t = center.t + t_half * (2.0 * (j as f64 + rng.gen::<f64>()) / k_t as f64 - 1.0);
            let mut h = foot.clone();
            if !basis.is_empty() {
                let mut dir: Vec<f64> = (0..basis.len())
                    .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                    .collect();
                let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
                dir.iter_mut().for_each(|x| *x /= norm);
                let rho = rho2.sqrt();
                for (k, w) in basis.iter().enumerate() {
                    let coord = w0[k] + rho * dir[k];
                    for (hk, wk) in h.iter_mut().zip(w) {
                        *hk += coord * wk;
                    }
                }
            }
            let p = Point::new(h, t);
            if distance(&p, center, Metric::Koranyi).unwrap() > r {
                continue;
            }
            let d = index.nearest(&p, Metric::Koranyi);
            if d > sup {
                sup = d;
            }
        }
    }
    sup / r
}

fn half_sphere_dirs(n: usize, count: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for u in sphere_grid(n, count) {
        let lead = u.iter().find(|x| x.abs() > 1e-12).copied().unwrap_or(1.0);
        let v: Vec<f64> = if lead < 0.0 {
            u.iter().map(|x| -x).collect()
        } else {
            u
        };
        if !out
            .iter()
            .any(|w| w.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum::<f64>() < 1e-9)
        {
            out.push(v);
        }
    }
    out
}

/// Beta numbers of the ball `B(center, r)`.
///
/// The one-sided number minimizes, over unit normals, the normalized
/// half-spread of horizontal projections of the support atoms in the ball
/// (the optimal plane offset sits at the midrange). The bilateral number
/// adds the sup over sampled plane points of the distance back to the
/// support. Both use a coarse sphere grid followed by a shrinking local
/// search.
pub fn beta_numbers(
    mu: &ParticleMeasure,
    center: &Point,
    r: f64,
    opts: &BetaOptions,
) -> Result<BetaPair> {
    if !(r > 0.0) {
        return Err(Error::invalid("radius must be positive"));
    }
    let n = mu.ambient_dim();
    let in_ball: Vec<&[f64]> = mu
        .atoms
        .iter()
        .filter(|a| {
            distance(&a.point, center, Metric::Koranyi)
                .map(|d| d <= r)
                .unwrap_or(false)
        })
        .map(|a| a.point.h.as_slice())
        .collect();
    if in_ball.is_empty() {
        return Err(Error::EmptyBall);
    }
    let near: Vec<&Point> = mu
        .atoms
        .iter()
        .map(|a| &a.point)
        .filter(|p| {
            distance(p, center, Metric::Koranyi)
                .map(|d| d <= 3.0 * r)
                .unwrap_or(false)
        })
        .collect();
    let stride = near.len().div_ceil(opts.coarse_atom_cap).max(1);
    let near_coarse: Vec<&Point> = near.iter().step_by(stride).copied().collect();
    let data = BallData {
        center,
        r,
        in_ball,
        near_full: NearestIndex::new(near.iter().copied()),
        near_coarse: NearestIndex::new(near_coarse),
    };

    let coarse = if opts.coarse_count == 0 {
        64 << n.min(4)
    } else {
        opts.coarse_count
    };
    let candidates = half_sphere_dirs(n, coarse);
    // One-sided minimization over the coarse grid.
    let spreads: Vec<(f64, f64)> = exec::map_indexed(candidates.len(), |i| {
        spread_objective(&data, &candidates[i])
    });
    let mut beta_u = candidates[0].clone();
    let mut beta_val = f64::INFINITY;
    for (u, &(b, _)) in candidates.iter().zip(&spreads) {
        if b < beta_val {
            beta_val = b;
            beta_u = u.clone();
        }
    }
    // Bilateral objective on the coarse grid (subsampled atoms).
    let bb_vals: Vec<f64> = exec::map_indexed(candidates.len(), |i| {
        let (b, mid) = spreads[i];
        b + plane_sup(
            &data,
            &candidates[i],
            mid,
            opts.plane_samples / 4 + 32,
            true,
            opts.seed ^ i as u64,
        )
    });
    let mut bb_u = candidates[0].clone();
    let mut bb_val = f64::INFINITY;
    for (u, &v) in candidates.iter().zip(&bb_vals) {
        if v < bb_val {
            bb_val = v;
            bb_u = u.clone();
        }
    }
    // Shrinking local refinement of both objectives.
    let refine =
        |start: Vec<f64>, eval: &dyn Fn(&[f64], u64) -> f64, steps: usize| -> (Vec<f64>, f64) {
            let mut best = start;
            let mut best_val = eval(&best, 0);
            if n == 1 {
                return (best, best_val);
            }
            let mut angle = 0.3;
            let mut salt = 1u64;
            for _ in 0..steps {
                let mut improved = false;
                for d in sphere_grid(n, opts.refine_width) {
                    let mut u: Vec<f64> = best.iter().zip(&d).map(|(a, b)| a + angle * b).collect();
                    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
                    u.iter_mut().for_each(|x| *x /= norm);
                    salt += 1;
                    let v = eval(&u, salt);
                    if v < best_val {
                        best_val = v;
                        best = u;
                        improved = true;
                    }
                }
                if !improved {
                    angle *= 0.6;
                }
            }
            (best, best_val)
        };
    let (_, beta_val) = refine(
        beta_u,
        &|u, _| spread_objective(&data, u).0,
        opts.refine_steps,
    );
    let full_eval = |u: &[f64], salt: u64| -> f64 {
        let (b, mid) = spread_objective(&data, u);
        b + plane_sup(
            &data,
            u,
            mid,
            opts.plane_samples,
            false,
            opts.seed ^ (salt << 32),
        )
    };
    let coarse_best_full = full_eval(&bb_u, u64::MAX);
    let (bb_u, bb_refined) = refine(bb_u, &full_eval, opts.refine_steps);
    let bb_final = bb_refined.min(coarse_best_full);
    // the one-sided value can only improve on the bilateral minimizer
    let beta_final = beta_val.min(spread_objective(&data, &bb_u).0);
    let (_, mid) = spread_objective(&data, &bb_u);
    let best_plane = VerticalHyperplane::new(bb_u, mid)?;
    Ok(BetaPair {
        beta: beta_final,
        bbeta: bb_final.max(beta_final),
        best_plane,
    })
}
