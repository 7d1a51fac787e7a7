//! Numerical toolkit for geometric measure theory on the parabolic group.
//!
//! The parabolic group is `R^{n+1}` with Euclidean addition, anisotropic
//! dilations `(x_H, x_T) -> (l x_H, l^2 x_T)`, and a homogeneous metric
//! (Koranyi or box). This crate provides the computable objects of the
//! theory of measures with density in that space:
//!
//! * [`geometry`] — points, dilations, the two homogeneous metrics,
//!   homogeneous subgroups, and closed-form distances to vertical
//!   hyperplanes;
//! * [`measure`] — analytic measure models (flat planes, vertical lines,
//!   quadric graphs, cone cylinders, the light-cone product, Hölder
//!   graphs), seeded importance-weighted particle clouds, ball-mass and
//!   density estimation, blowups, and the bounded-Lipschitz flatness
//!   functionals;
//! * [`moments`] — the polarization of the Koranyi norm, Preiss-style
//!   moments and their expansion residuals, barycenter curves, and the
//!   spectral flatness functional;
//! * [`rect`] — beta numbers, parabolic dyadic cubes, Carleson sums,
//!   a weak-constant-density probe, the truncated odd-kernel operator,
//!   and the density square function;
//! * [`quadric`] — the Taylor expansion of the surface measure of
//!   quadric graphs: polar coefficients, radius solutions, direct area
//!   quadrature, and the expansion constants;
//! * [`holder`] — a certified 1/2-Hölder Weierstrass-type graph whose
//!   box-metric surface measure is exactly uniform, with Koranyi-metric
//!   non-flatness traces.
//!
//! All estimators are deterministic given a seed and produce identical
//! results whether they run sequentially or on a rayon pool (see
//! [`exec`]).

// `!(x > 0.0)` is the NaN-rejecting validation idiom used throughout;
// small fixed-dimension loops index several matrices at once.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod exec;
pub mod geometry;
pub mod holder;
pub mod measure;
pub mod moments;
pub mod numerics;
pub mod quadric;
pub mod rect;

pub use error::{Error, Result};
pub use geometry::{Metric, Point, VerticalHyperplane};
pub use measure::{MassEstimate, MeasureModel, ParticleMeasure, SampleConfig};
