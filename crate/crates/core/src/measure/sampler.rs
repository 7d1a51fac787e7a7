//! Importance samplers for the analytic measure models.
//!
//! Every sampler draws in parameter space from a Gaussian proposal with
//! horizontal standard deviation `spread` and vertical standard deviation
//! `spread^2`, and attaches the analytic weight `target density / (N *
//! proposal density)`. Atom `i` uses an RNG stream derived from `(seed,
//! i)`, so the cloud is reproducible and independent of chunking.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::exec;
use crate::geometry::{dot, orthonormal_complement, Metric, Point};
use crate::measure::{Atom, MeasureModel, ParticleMeasure, SampleConfig};

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-atom RNG stream.
pub(crate) fn atom_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(index.wrapping_add(1))))
}

/// Derive an unrelated stream, e.g. for auxiliary clouds.
pub(crate) fn derive_seed(seed: u64, salt: u64) -> u64 {
    splitmix64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ salt)
}

struct Gaussian1 {
    mean: f64,
    sd: f64,
}

impl Gaussian1 {
    fn draw(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let z: f64 = rng.sample(StandardNormal);
        let x = self.mean + self.sd * z;
        let density = (-0.5 * z * z).exp() / (self.sd * (2.0 * std::f64::consts::PI).sqrt());
        (x, density)
    }
}

fn center_of(cfg: &SampleConfig, n: usize) -> Point {
    cfg.center.clone().unwrap_or_else(|| Point::origin(n))
}

/// Draw a particle cloud from the model.
pub fn sample(model: &MeasureModel, cfg: &SampleConfig) -> Result<ParticleMeasure> {
    model.validate()?;
    if cfg.n_atoms == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    if !(cfg.spread > 0.0) {
        return Err(Error::invalid("spread must be positive"));
    }
    let atoms = match model {
        MeasureModel::FlatPlane { plane } => {
            let n = plane.unit_normal.len();
            let lambda = crate::measure::flat_normalization(n)?;
            let basis = orthonormal_complement(&plane.unit_normal);
            let center = center_of(cfg, n);
            let foot: Vec<f64> = plane.unit_normal.iter().map(|u| u * plane.offset).collect();
            let in_plane: Vec<f64> = basis
                .iter()
                .map(|w| dot(w, &center.h) - dot(w, &foot))
                .collect();
            let nf = cfg.n_atoms as f64;
            let sd_h = cfg.spread;
            let sd_t = cfg.spread * cfg.spread;
            exec::map_indexed(cfg.n_atoms, |i| {
                let mut rng = atom_rng(cfg.seed, i as u64);
                let mut h = foot.clone();
                let mut density = 1.0;
                for (k, w) in basis.iter().enumerate() {
                    let (xi, q) = Gaussian1 {
                        mean: in_plane[k],
                        sd: sd_h,
                    }
                    .draw(&mut rng);
                    density *= q;
                    for (hk, wk) in h.iter_mut().zip(w) {
                        *hk += xi * wk;
                    }
                }
                let (t, qt) = Gaussian1 {
                    mean: center.t,
                    sd: sd_t,
                }
                .draw(&mut rng);
                density *= qt;
                Atom {
                    point: Point::new(h, t),
                    weight: lambda / (nf * density),
                }
            })
        }
        MeasureModel::VerticalLine { base } => {
            let center = center_of(cfg, base.dim());
            let nf = cfg.n_atoms as f64;
            let sd_t = cfg.spread * cfg.spread;
            exec::map_indexed(cfg.n_atoms, |i| {
                let mut rng = atom_rng(cfg.seed, i as u64);
                let (t, qt) = Gaussian1 {
                    mean: center.t,
                    sd: sd_t,
                }
                .draw(&mut rng);
                Atom {
                    point: Point::new(base.h.clone(), t),
                    weight: 0.5 / (nf * qt),
                }
            })
        }
        MeasureModel::QuadricGraph { d, b } => {
            let n = d.len();
            let center = center_of(cfg, n);
            let nf = cfg.n_atoms as f64;
            let sd_h = cfg.spread;
            exec::map_indexed(cfg.n_atoms, |i| {
                let mut rng = atom_rng(cfg.seed, i as u64);
                let mut y = vec![0.0; n];
                let mut density = 1.0;
                for k in 0..n {
                    let (v, q) = Gaussian1 {
                        mean: center.h[k],
                        sd: sd_h,
                    }
                    .draw(&mut rng);
                    y[k] = v;
                    density *= q;
                }
                let (f, grad) = quadric_value_grad(d, b, &y);
                let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                Atom {
                    point: Point::new(y, f),
                    weight: grad_norm / (nf * density),
                }
            })
        }
        MeasureModel::ConeCylinder { q, b } => sample_cone_cylinder(q, b, cfg, 1.0)?,
        MeasureModel::KpConeProduct { n } => {
            let scale = kp_normalization(*n)?;
            let (q, b) = kp_quadric(*n);
            sample_cone_cylinder(&q, &b, cfg, scale)?
        }
        MeasureModel::HolderGraph { profile } => {
            let center = center_of(cfg, 1);
            let nf = cfg.n_atoms as f64;
            let sd_t = cfg.spread * cfg.spread;
            exec::map_indexed(cfg.n_atoms, |i| {
                let mut rng = atom_rng(cfg.seed, i as u64);
                let (t, qt) = Gaussian1 {
                    mean: center.t,
                    sd: sd_t,
                }
                .draw(&mut rng);
                Atom {
                    point: Point::new(vec![profile.eval(t)], t),
                    weight: 1.0 / (nf * qt),
                }
            })
        }
    };
    Ok(ParticleMeasure {
        atoms,
        seed: cfg.seed,
        hom_dim: model.homogeneous_dim(),
        total_mass_hint: None,
        model: Some(model.clone()),
    })
}

fn quadric_value_grad(d: &[Vec<f64>], b: &[f64], y: &[f64]) -> (f64, Vec<f64>) {
    let n = y.len();
    let mut dy = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            dy[i] += d[i][j] * y[j];
        }
    }
    let val = dot(&dy, y) + dot(b, y);
    let grad: Vec<f64> = (0..n).map(|i| 2.0 * dy[i] + b[i]).collect();
    (val, grad)
}

/// The light-cone quadric `y_1^2 + y_2^2 + y_3^2 - y_4^2 = 0` in `R^n`.
fn kp_quadric(n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut q = vec![vec![0.0; n]; n];
    q[0][0] = 1.0;
    q[1][1] = 1.0;
    q[2][2] = 1.0;
    q[3][3] = -1.0;
    (q, vec![0.0; n])
}

/// Sample the vertically ruled set `{<y, Q y> + <b, y> = 0} x R`.
///
/// The level set is sliced along the dominant eigenvector `e` of `Q`: for
/// coordinates `y'` in `e^perp` the slice is a quadratic in `s`, whose
/// roots are surface points with graph-area weight `|grad g| / |d_e g|`.
/// Both roots are emitted, so a draw can produce zero, one, or two atoms.
fn sample_cone_cylinder(
    q: &[Vec<f64>],
    b: &[f64],
    cfg: &SampleConfig,
    scale: f64,
) -> Result<Vec<Atom>> {
    let n = q.len();
    let qm = DMatrix::from_fn(n, n, |i, j| q[i][j]);
    let eig = qm.clone().symmetric_eigen();
    // Slice along an eigenvector of the minority sign group: the restricted
    // form on its complement is then dominated by the opposite sign, which
    // keeps the slice transversal away from a null set and the area weight
    // bounded (for the light cone it is exactly sqrt(2)).
    let pos = eig.eigenvalues.iter().filter(|l| **l > 1e-12).count();
    let neg = eig.eigenvalues.iter().filter(|l| **l < -1e-12).count();
    let want_negative = neg > 0 && (pos == 0 || neg <= pos);
    let mut top: Option<usize> = None;
    for i in 0..n {
        let l = eig.eigenvalues[i];
        let sign_ok = if want_negative { l < -1e-12 } else { l > 1e-12 };
        if sign_ok && top.is_none_or(|t| l.abs() > eig.eigenvalues[t].abs()) {
            top = Some(i);
        }
    }
    let top = top.ok_or_else(|| Error::invalid("cone matrix has no nonzero eigenvalue"))?;
    let e: Vec<f64> = eig.eigenvectors.column(top).iter().copied().collect();
    let a_coef = eig.eigenvalues[top];
    let basis = orthonormal_complement(&e);
    let center = center_of(cfg, n);
    let center_coords: Vec<f64> = basis.iter().map(|w| dot(w, &center.h)).collect();
    let nf = cfg.n_atoms as f64;
    let sd_h = cfg.spread;
    let sd_t = cfg.spread * cfg.spread;
    let chunks = exec::map_chunks(cfg.n_atoms, exec::CHUNK, |range| {
        let mut out: Vec<Atom> = Vec::with_capacity(2 * range.len());
        for i in range {
            let mut rng = atom_rng(cfg.seed, i as u64);
            let mut yp = vec![0.0; n];
            let mut density = 1.0;
            for (k, w) in basis.iter().enumerate() {
                let (xi, qd) = Gaussian1 {
                    mean: center_coords[k],
                    sd: sd_h,
                }
                .draw(&mut rng);
                density *= qd;
                for (yk, wk) in yp.iter_mut().zip(w) {
                    *yk += xi * wk;
                }
            }
            let (t, qt) = Gaussian1 {
                mean: center.t,
                sd: sd_t,
            }
            .draw(&mut rng);
            density *= qt;
            // g(y' + s e) = a s^2 + l s + c0
            let mut qyp = vec![0.0; n];
            for r in 0..n {
                for c in 0..n {
                    qyp[r] += q[r][c] * yp[c];
                }
            }
            let l_coef = 2.0 * dot(&e, &qyp) + dot(b, &e);
            let c_coef = dot(&qyp, &yp) + dot(b, &yp);
            let disc = l_coef * l_coef - 4.0 * a_coef * c_coef;
            if disc < 0.0 {
                continue;
            }
            let sq = disc.sqrt();
            let roots = if sq == 0.0 {
                vec![-l_coef / (2.0 * a_coef)]
            } else {
                vec![
                    (-l_coef + sq) / (2.0 * a_coef),
                    (-l_coef - sq) / (2.0 * a_coef),
                ]
            };
            for s in roots {
                let p: Vec<f64> = (0..n).map(|k| yp[k] + s * e[k]).collect();
                let (_, grad) = quadric_value_grad(q, b, &p);
                let normal_deriv = (2.0 * a_coef * s + l_coef).abs();
                let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if normal_deriv <= 1e-12 * grad_norm.max(1e-300) {
                    // tangential slice: measure-zero event, skipped
                    continue;
                }
                let area_weight = grad_norm / normal_deriv;
                out.push(Atom {
                    point: Point::new(p, t),
                    weight: scale * area_weight / (nf * density),
                });
            }
        }
        out
    });
    let mut atoms = Vec::new();
    for c in chunks {
        atoms.extend(c);
    }
    if atoms.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    Ok(atoms)
}

static KP_NORMALIZATION: OnceLock<Mutex<HashMap<usize, f64>>> = OnceLock::new();

/// Normalization constant of the light-cone product measure, fixed so the
/// unit ball at the vertex has mass one. Estimated once by Monte Carlo and
/// cached per dimension.
pub fn kp_normalization(n: usize) -> Result<f64> {
    if n < 4 {
        return Err(Error::invalid("light-cone product needs n >= 4"));
    }
    let cache = KP_NORMALIZATION.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = cache.lock().unwrap().get(&n) {
        return Ok(*v);
    }
    let (q, b) = kp_quadric(n);
    let cfg = SampleConfig {
        n_atoms: 200_000,
        seed: 0x4b50_434e,
        spread: 1.2,
        center: None,
    };
    let raw = sample_cone_cylinder(&q, &b, &cfg, 1.0)?;
    let mu = ParticleMeasure {
        atoms: raw,
        seed: cfg.seed,
        hom_dim: (n + 1) as f64,
        total_mass_hint: None,
        model: None,
    };
    let mass = mu.ball_mass(&Point::origin(n), 1.0, Metric::Koranyi)?;
    if !(mass.value > 0.0) {
        return Err(Error::EmptyMeasure);
    }
    let c = 1.0 / mass.value;
    cache.lock().unwrap().insert(n, c);
    Ok(c)
}

/// Closed-form normalization oracle for the light-cone product: the
/// Euclidean slice measure of the cone ball is `(4 pi / 3) rho^3` times the
/// usual flat-slice volume factors, which integrates in closed form.
pub fn kp_normalization_oracle(n: usize) -> Result<f64> {
    use crate::numerics::gamma_fn;
    if n < 4 {
        return Err(Error::invalid("light-cone product needs n >= 4"));
    }
    // H^{n-1} on (cone x R^{n-4}) has Euclidean-ball masses kappa_{n-1} rho^{n-1},
    // exactly as a flat (n-1)-plane. The parabolic Koranyi ball slices as
    // int_{|tau| <= r^2} kappa (r^4 - tau^2)^{(n-1)/4} dtau.
    let m = (n - 1) as f64;
    let kappa = std::f64::consts::PI.powf(m / 2.0) / gamma_fn(m / 2.0 + 1.0);
    let slice = gamma_fn(0.5) * gamma_fn(m / 4.0 + 1.0) / gamma_fn(m / 4.0 + 1.5);
    Ok(1.0 / (kappa * slice))
}
