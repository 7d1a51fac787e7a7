//! Points of the parabolic group, dilations, homogeneous metrics, and
//! homogeneous subgroups.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the parabolic group: a horizontal part in `R^n` and a
/// vertical (time) coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub h: Vec<f64>,
    pub t: f64,
}

impl Point {
    pub fn new(h: Vec<f64>, t: f64) -> Self {
        Point { h, t }
    }

    /// Origin of the group in `n` horizontal dimensions.
    pub fn origin(n: usize) -> Self {
        Point {
            h: vec![0.0; n],
            t: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.h.len()
    }

    pub fn horizontal_norm(&self) -> f64 {
        self.h.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Homogeneous norm `d(x, 0)` for the given metric.
    pub fn norm(&self, m: Metric) -> f64 {
        m.norm(&self.h, self.t)
    }

    pub fn add(&self, other: &Point) -> Point {
        debug_assert_eq!(self.dim(), other.dim());
        Point {
            h: self.h.iter().zip(&other.h).map(|(a, b)| a + b).collect(),
            t: self.t + other.t,
        }
    }

    pub fn sub(&self, other: &Point) -> Point {
        debug_assert_eq!(self.dim(), other.dim());
        Point {
            h: self.h.iter().zip(&other.h).map(|(a, b)| a - b).collect(),
            t: self.t - other.t,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.h.iter().all(|x| x.is_finite())
    }
}

/// Anisotropic dilation `(x_H, x_T) -> (l x_H, l^2 x_T)`.
pub fn dilate(x: &Point, lambda: f64) -> Result<Point> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!(
            "dilation factor must be positive, got {lambda}"
        )));
    }
    Ok(Point {
        h: x.h.iter().map(|v| lambda * v).collect(),
        t: lambda * lambda * x.t,
    })
}

/// The two homogeneous metrics of the toolkit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    /// `(|dH|^4 + |dT|^2)^{1/4}`
    Koranyi,
    /// `max(|dH|, |dT|^{1/2})`
    BoxInf,
}

impl Metric {
    fn norm(self, h: &[f64], t: f64) -> f64 {
        let hh: f64 = h.iter().map(|x| x * x).sum();
        match self {
            Metric::Koranyi => (hh * hh + t * t).sqrt().sqrt(),
            Metric::BoxInf => hh.sqrt().max(t.abs().sqrt()),
        }
    }
}

/// Homogeneous distance between two points.
pub fn distance(x: &Point, y: &Point, m: Metric) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch(x.dim(), y.dim()));
    }
    let hh: f64 = x.h.iter().zip(&y.h).map(|(a, b)| (b - a) * (b - a)).sum();
    let dt = y.t - x.t;
    Ok(match m {
        Metric::Koranyi => (hh * hh + dt * dt).sqrt().sqrt(),
        Metric::BoxInf => hh.sqrt().max(dt.abs().sqrt()),
    })
}

/// A homogeneous subgroup. These come in exactly two shapes: a linear
/// subspace of the horizontal layer, or such a subspace plus the vertical
/// axis. The homogeneous dimension is `dim V_1 + 2` when the vertical axis
/// is included.
#[derive(Debug, Clone)]
pub struct HomSubgroup {
    /// Orthonormal basis of the horizontal subspace `V_1`.
    pub horizontal_part: Vec<Vec<f64>>,
    pub includes_vertical: bool,
    pub ambient_dim: usize,
}

impl HomSubgroup {
    pub fn new(
        horizontal_part: Vec<Vec<f64>>,
        includes_vertical: bool,
        ambient_dim: usize,
    ) -> Result<Self> {
        for v in &horizontal_part {
            if v.len() != ambient_dim {
                return Err(Error::DimensionMismatch(v.len(), ambient_dim));
            }
        }
        Ok(HomSubgroup {
            horizontal_part,
            includes_vertical,
            ambient_dim,
        })
    }

    /// The vertical line through the origin.
    pub fn vertical_line(n: usize) -> Self {
        HomSubgroup {
            horizontal_part: Vec::new(),
            includes_vertical: true,
            ambient_dim: n,
        }
    }

    pub fn homogeneous_dim(&self) -> usize {
        self.horizontal_part.len() + if self.includes_vertical { 2 } else { 0 }
    }
}

/// The stratification vector `(dim V_1, vertical ? 1 : 0)`.
pub fn stratification(v: &HomSubgroup) -> (usize, usize) {
    (
        v.horizontal_part.len(),
        if v.includes_vertical { 1 } else { 0 },
    )
}

/// An affine vertical hyperplane `{x : <u, x_H> = c}`. Codimension-one
/// homogeneous subgroups are exactly of this form with `c = 0`; translates
/// have `c` arbitrary. The set is invariant under vertical translations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerticalHyperplane {
    pub unit_normal: Vec<f64>,
    pub offset: f64,
}

impl VerticalHyperplane {
    pub fn new(normal: Vec<f64>, offset: f64) -> Result<Self> {
        let norm: f64 = normal.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::invalid("hyperplane normal must be nonzero"));
        }
        Ok(VerticalHyperplane {
            unit_normal: normal.iter().map(|x| x / norm).collect(),
            offset: offset / norm,
        })
    }

    /// Hyperplane through `x` with the given normal.
    pub fn through(normal: Vec<f64>, x: &Point) -> Result<Self> {
        let plane = VerticalHyperplane::new(normal, 0.0)?;
        let c = dot(&plane.unit_normal, &x.h);
        Ok(VerticalHyperplane {
            unit_normal: plane.unit_normal,
            offset: c,
        })
    }

    pub fn contains(&self, x: &Point, tol: f64) -> bool {
        (dot(&self.unit_normal, &x.h) - self.offset).abs() <= tol
    }

    /// Signed horizontal offset of `x` from the plane.
    pub fn signed_distance(&self, x: &Point) -> f64 {
        dot(&self.unit_normal, &x.h) - self.offset
    }
}

/// Distance from a point to a vertical hyperplane. The plane is invariant
/// under vertical translations, so the minimizer matches the time
/// coordinate of `x` exactly and the distance reduces to the horizontal
/// offset `|<u, x_H> - c|` for both metrics.
pub fn plane_distance(x: &Point, v: &VerticalHyperplane, _m: Metric) -> f64 {
    v.signed_distance(x).abs()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orthonormal basis of the orthogonal complement of a unit vector in `R^n`.
///
/// Deterministic: Gram-Schmidt against the coordinate axes, skipping the
/// axis most aligned with `u`.
pub(crate) fn orthonormal_complement(u: &[f64]) -> Vec<Vec<f64>> {
    let n = u.len();
    if n <= 1 {
        return Vec::new();
    }
    let skip = u
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n - 1);
    for axis in 0..n {
        if axis == skip {
            continue;
        }
        let mut v = vec![0.0; n];
        v[axis] = 1.0;
        let c = dot(&v, u);
        for k in 0..n {
            v[k] -= c * u[k];
        }
        for w in &basis {
            let c = dot(&v, w);
            for k in 0..n {
                v[k] -= c * w[k];
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut v {
            *x /= norm;
        }
        basis.push(v);
    }
    basis
}
