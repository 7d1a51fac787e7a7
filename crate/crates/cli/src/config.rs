//! Experiment configuration: fully serializable, and together with the
//! binary version it determines the report byte for byte.

use serde::{Deserialize, Serialize};

use pgmt_core::error::{Error, Result};
use pgmt_core::geometry::{Point, VerticalHyperplane};
use pgmt_core::holder::weierstrass_profile;
use pgmt_core::measure::MeasureModel;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: CommandCfg,
    pub seed: u64,
    pub samples: usize,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[serde(default)]
    pub jobs: usize,
    /// Optional cap on the sample budget; exceeding it clamps the run and
    /// flags the report as partial.
    #[serde(default)]
    pub budget: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CommandCfg {
    /// Ball-mass uniformity of a model across centers and radii.
    VerifyUniform {
        model: ModelCfg,
        radii: Vec<f64>,
        centers: usize,
        /// Allowed density deviation on top of three standard errors.
        tolerance: f64,
    },
    /// Moment curves, flatness functional, and a JSON moment report.
    Moments { model: ModelCfg, s: f64 },
    /// Beta numbers of one ball around the support point nearest the origin.
    Beta { model: ModelCfg, radius: f64 },
    /// Dyadic cube tree, per-cube beta numbers, and the worst Carleson ratio.
    Bwgl {
        model: ModelCfg,
        eta: f64,
        root_gen: i32,
        depth: u32,
        mass_threshold: f64,
    },
    /// Weak-constant-density probe on one ball.
    Wcd {
        model: ModelCfg,
        radius: f64,
        epsilon: f64,
    },
    /// Area expansion of a quadric graph and its fitted coefficients.
    QuadricExpansion {
        d: Vec<Vec<f64>>,
        x: Vec<f64>,
        radii: Vec<f64>,
    },
    /// Certified Hölder graph: box-ball identity and non-flatness trace.
    Counterexample {
        base: u32,
        levels: u32,
        scales: Vec<f64>,
    },
    /// Density square function at one center.
    SquareFunction {
        model: ModelCfg,
        radius: f64,
        q: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelCfg {
    Flat {
        n: usize,
    },
    VerticalLine {
        n: usize,
    },
    KpCone {
        n: usize,
    },
    Quadric {
        d: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
    Holder {
        base: u32,
        levels: u32,
        profile_seed: u64,
    },
}

impl ModelCfg {
    pub fn build(&self) -> Result<MeasureModel> {
        let model = match self {
            ModelCfg::Flat { n } => {
                if *n < 1 {
                    return Err(Error::invalid("flat model needs n >= 1"));
                }
                let mut normal = vec![0.0; *n];
                normal[0] = 1.0;
                MeasureModel::FlatPlane {
                    plane: VerticalHyperplane::new(normal, 0.0)?,
                }
            }
            ModelCfg::VerticalLine { n } => MeasureModel::VerticalLine {
                base: Point::origin(*n),
            },
            ModelCfg::KpCone { n } => MeasureModel::KpConeProduct { n: *n },
            ModelCfg::Quadric { d, b } => MeasureModel::QuadricGraph {
                d: d.clone(),
                b: b.clone(),
            },
            ModelCfg::Holder {
                base,
                levels,
                profile_seed,
            } => MeasureModel::HolderGraph {
                profile: weierstrass_profile(*base, *levels, *profile_seed)?,
            },
        };
        model.validate()?;
        Ok(model)
    }

    /// True for models normalized to unit density (`mu(B(x,r)) = r^h` at
    /// support points under the Koranyi metric).
    pub fn is_unit_density(&self) -> bool {
        matches!(
            self,
            ModelCfg::Flat { .. } | ModelCfg::VerticalLine { .. } | ModelCfg::KpCone { .. }
        )
    }
}
