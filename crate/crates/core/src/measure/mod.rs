//! Analytic measure models and their particle discretizations.
//!
//! A [`ParticleMeasure`] is a seeded, importance-weighted sample cloud: a
//! list of atoms `(z_i, w_i)` such that `sum_i w_i g(z_i)` estimates the
//! integral of `g` against the model's measure. Sampling is deterministic
//! given `(model, count, seed)`: every atom derives its own RNG stream from
//! the seed and its index, so parallel and sequential sampling agree bit
//! for bit.

pub mod io;
pub mod sampler;
pub mod transport;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::geometry::{dilate, distance, Metric, Point, VerticalHyperplane};
use crate::holder::HolderProfile;
use crate::numerics::{adaptive_simpson, sphere_area};

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

impl MassEstimate {
    pub fn exact(value: f64) -> Self {
        MassEstimate {
            value,
            std_error: 0.0,
            n_samples: 0,
        }
    }

    /// True when `target` lies within `k` standard errors of the estimate.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.std_error
    }
}

/// Sampling configuration.
///
/// `spread` is the parabolic proposal radius: horizontal parameters get a
/// Gaussian proposal of standard deviation `spread`, vertical parameters
/// one of standard deviation `spread^2`. `center`, when present, recenters
/// the proposal near that point so that small balls around it are well
/// covered.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleConfig {
    pub n_atoms: usize,
    pub seed: u64,
    pub spread: f64,
    pub center: Option<Point>,
}

impl SampleConfig {
    pub fn new(n_atoms: usize, seed: u64) -> Self {
        SampleConfig {
            n_atoms,
            seed,
            spread: 3.0,
            center: None,
        }
    }

    pub fn with_spread(mut self, spread: f64) -> Self {
        self.spread = spread;
        self
    }

    pub fn with_center(mut self, center: Point) -> Self {
        self.center = Some(center);
        self
    }
}

/// A weighted sample atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub point: Point,
    pub weight: f64,
}

/// Tagged analytic measure models. Each variant carries its canonical
/// normalization:
///
/// * `FlatPlane` — Haar measure of a vertical hyperplane, scaled so the
///   unit Koranyi ball at a support point has mass one;
/// * `VerticalLine` — one half of 1-dimensional Lebesgue measure in `t`,
///   so that balls of radius `r` have mass `r^2`;
/// * `QuadricGraph` — the surface measure of `t = <y, D y> + <b, y>`
///   (coarea weight `|grad f|`, unnormalized);
/// * `ConeCylinder` — the product of Euclidean codimension-one Hausdorff
///   measure on `{<y, Q y> + <b, y> = 0}` with Lebesgue measure in `t`
///   (unnormalized);
/// * `KpConeProduct` — the light-cone product measure, normalized
///   numerically so the unit ball at the vertex has mass one;
/// * `HolderGraph` — the pushforward of Lebesgue measure under
///   `t -> (f(t), t)` in the one-dimensional parabolic group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MeasureModel {
    FlatPlane { plane: VerticalHyperplane },
    VerticalLine { base: Point },
    QuadricGraph { d: Vec<Vec<f64>>, b: Vec<f64> },
    ConeCylinder { q: Vec<Vec<f64>>, b: Vec<f64> },
    KpConeProduct { n: usize },
    HolderGraph { profile: HolderProfile },
}

impl MeasureModel {
    /// Ambient horizontal dimension `n`.
    pub fn ambient_dim(&self) -> usize {
        match self {
            MeasureModel::FlatPlane { plane } => plane.unit_normal.len(),
            MeasureModel::VerticalLine { base } => base.dim(),
            MeasureModel::QuadricGraph { d, .. } => d.len(),
            MeasureModel::ConeCylinder { q, .. } => q.len(),
            MeasureModel::KpConeProduct { n } => *n,
            MeasureModel::HolderGraph { .. } => 1,
        }
    }

    /// Homogeneous dimension of the support.
    pub fn homogeneous_dim(&self) -> f64 {
        match self {
            MeasureModel::VerticalLine { .. } | MeasureModel::HolderGraph { .. } => 2.0,
            _ => self.ambient_dim() as f64 + 1.0,
        }
    }

    /// Validate the model parameters.
    pub fn validate(&self) -> Result<()> {
        match self {
            MeasureModel::QuadricGraph { d, b } => {
                check_symmetric(d)?;
                if b.len() != d.len() {
                    return Err(Error::DimensionMismatch(b.len(), d.len()));
                }
                if matrix_norm(d) == 0.0 {
                    return Err(Error::invalid("quadric matrix must be nonzero"));
                }
                Ok(())
            }
            MeasureModel::ConeCylinder { q, b } => {
                check_symmetric(q)?;
                if b.len() != q.len() {
                    return Err(Error::DimensionMismatch(b.len(), q.len()));
                }
                if matrix_norm(q) == 0.0 {
                    return Err(Error::invalid("cone matrix must be nonzero"));
                }
                Ok(())
            }
            MeasureModel::KpConeProduct { n } => {
                if *n < 4 {
                    Err(Error::invalid(format!(
                        "light-cone product needs n >= 4, got {n}"
                    )))
                } else {
                    Ok(())
                }
            }
            MeasureModel::HolderGraph { profile } => {
                if profile.certified_constant > 1.0 {
                    Err(Error::Certification(format!(
                        "profile constant {} exceeds 1",
                        profile.certified_constant
                    )))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Draw a particle cloud; see [`sampler`].
    pub fn sample(&self, cfg: &SampleConfig) -> Result<ParticleMeasure> {
        sampler::sample(self, cfg)
    }

    /// Exact ball mass where a closed form is available: flat planes under
    /// the Koranyi metric, vertical lines under both metrics, and Hölder
    /// graphs under the box metric, each at a support point.
    pub fn closed_form_ball_mass(&self, x: &Point, r: f64, m: Metric) -> Option<f64> {
        if !(r > 0.0) {
            return None;
        }
        match (self, m) {
            (MeasureModel::FlatPlane { plane }, Metric::Koranyi) => {
                if plane.contains(x, 1e-12) {
                    let n = plane.unit_normal.len();
                    Some(r.powi(n as i32 + 1))
                } else {
                    None
                }
            }
            (MeasureModel::VerticalLine { base }, _) => {
                let on = x.h.iter().zip(&base.h).all(|(a, b)| (a - b).abs() <= 1e-12);
                if on {
                    Some(r * r)
                } else {
                    None
                }
            }
            (MeasureModel::HolderGraph { profile }, Metric::BoxInf) => {
                if (x.h[0] - profile.eval(x.t)).abs() <= 1e-9 {
                    Some(2.0 * r * r)
                } else {
                    None
                }
            }
            _ => None,
        }
    }
}

fn check_symmetric(m: &[Vec<f64>]) -> Result<()> {
    let n = m.len();
    for row in m {
        if row.len() != n {
            return Err(Error::DimensionMismatch(row.len(), n));
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[i][j] - m[j][i]).abs() > 1e-12 * (1.0 + m[i][j].abs()) {
                return Err(Error::invalid("matrix must be symmetric"));
            }
        }
    }
    Ok(())
}

fn matrix_norm(m: &[Vec<f64>]) -> f64 {
    m.iter()
        .flat_map(|r| r.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
}

/// A seeded, importance-weighted sample cloud approximating a Radon
/// measure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParticleMeasure {
    pub atoms: Vec<Atom>,
    pub seed: u64,
    /// Homogeneous dimension of the underlying model.
    pub hom_dim: f64,
    pub total_mass_hint: Option<f64>,
    pub model: Option<MeasureModel>,
}

impl ParticleMeasure {
    pub fn ambient_dim(&self) -> usize {
        self.atoms.first().map(|a| a.point.dim()).unwrap_or(0)
    }

    pub fn total_weight(&self) -> f64 {
        exec::sum(self.atoms.len(), |i| self.atoms[i].weight)
    }

    /// Unbiased weighted estimate of the integral of `g`, with the
    /// standard error of the mean of the per-atom contributions.
    pub fn integrate<G>(&self, g: G) -> Result<MassEstimate>
    where
        G: Fn(&Point) -> f64 + Sync + Send,
    {
        let n = self.atoms.len();
        if n == 0 {
            return Err(Error::EmptyMeasure);
        }
        let nf = n as f64;
        let (s, s2) = exec::sum_and_sq(n, |i| {
            let a = &self.atoms[i];
            nf * a.weight * g(&a.point)
        });
        let mean = s / nf;
        let var = ((s2 - s * mean).max(0.0)) / ((n - 1).max(1) as f64);
        Ok(MassEstimate {
            value: mean,
            std_error: (var / nf).sqrt(),
            n_samples: n,
        })
    }

    /// Mass of the closed ball `B(x, r)` with standard error.
    pub fn ball_mass(&self, x: &Point, r: f64, m: Metric) -> Result<MassEstimate> {
        if !(r > 0.0) {
            return Err(Error::invalid("radius must be positive"));
        }
        self.integrate(|p| {
            if distance(p, x, m).unwrap_or(f64::INFINITY) <= r {
                1.0
            } else {
                0.0
            }
        })
    }

    /// The rescaled translate `r^{-h} T_{x,r}`: atoms map through
    /// `p -> delta_{1/r}(p - x)` and weights pick up `r^{-h}`.
    pub fn blowup(&self, x: &Point, r: f64, h: f64) -> Result<ParticleMeasure> {
        if !(r > 0.0) {
            return Err(Error::invalid("blowup scale must be positive"));
        }
        let scale = r.powf(-h);
        let atoms = exec::map_indexed(self.atoms.len(), |i| {
            let a = &self.atoms[i];
            Atom {
                point: dilate(&a.point.sub(x), 1.0 / r).expect("positive dilation"),
                weight: a.weight * scale,
            }
        });
        Ok(ParticleMeasure {
            atoms,
            seed: self.seed,
            hom_dim: self.hom_dim,
            total_mass_hint: None,
            model: None,
        })
    }

    /// Atoms within the closed ball, as a new cloud (weights unchanged).
    pub fn restrict_to_ball(&self, x: &Point, r: f64, m: Metric) -> ParticleMeasure {
        let atoms: Vec<Atom> = self
            .atoms
            .iter()
            .filter(|a| distance(&a.point, x, m).map(|d| d <= r).unwrap_or(false))
            .cloned()
            .collect();
        ParticleMeasure {
            atoms,
            seed: self.seed,
            hom_dim: self.hom_dim,
            total_mass_hint: None,
            model: self.model.clone(),
        }
    }

    /// `mu(B(x, r)) / r^h` along a grid of radii.
    pub fn density_curve(
        &self,
        x: &Point,
        radii: &[f64],
        h: f64,
        m: Metric,
    ) -> Result<Vec<MassEstimate>> {
        if radii.iter().any(|r| *r <= 0.0) {
            return Err(Error::invalid("radii must be positive"));
        }
        if radii.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::invalid("radii must be sorted"));
        }
        radii
            .iter()
            .map(|&r| {
                let est = self.ball_mass(x, r, m)?;
                let scale = r.powf(-h);
                Ok(MassEstimate {
                    value: est.value * scale,
                    std_error: est.std_error * scale,
                    n_samples: est.n_samples,
                })
            })
            .collect()
    }
}

/// Normalization of the flat codimension-one measure: the factor `l` such
/// that `l (H^{n-1} on V_1 tensor Lebesgue in t)` gives unit Koranyi ball
/// mass at support points. Computed by one-dimensional quadrature from the
/// slice representation of the ball; `n = 1` degenerates to the vertical
/// line with factor `1/2`.
pub fn flat_normalization(n: usize) -> Result<f64> {
    if n < 1 {
        return Err(Error::invalid("ambient dimension must be at least 1"));
    }
    if n == 1 {
        return Ok(0.5);
    }
    let integral = adaptive_simpson(
        &|rho: f64| rho.powi(n as i32 - 2) * (1.0 - rho.powi(4)).max(0.0).sqrt(),
        0.0,
        1.0,
        1e-13,
    );
    Ok(1.0 / (2.0 * sphere_area(n - 2) * integral))
}
