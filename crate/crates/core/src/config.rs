//! Named models, nonlinearities and engines for scenario files.
//!
//! A scenario is a JSON object:
//!
//! ```json
//! {
//!   "model": {"name": "gaussian_scale_mixture"},
//!   "h": {"name": "classical_cubic"},
//!   "mu": 0.005,
//!   "n_steps": 200000,
//!   "seeds": [1, 2, 3]
//! }
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::adaptive::{Mat2, MixingMatrix, DEFAULT_THINNING};
use crate::error::{BssError, Result};
use crate::meanfield::{ExpectationEngine, DEFAULT_QUADRATURE_NODES};
use crate::nonlinearity::{
    make_absvalue, make_classical, make_classical_cubic, make_score_based, HMatrix,
    OddFunctionPair, ScoreOffset,
};
use crate::sources::{
    make_contaminated, make_elliptical, make_gaussian_pair, make_gaussian_scale_mixture,
    make_polar_dependent, AffineModel, ContaminationConfig, EllipticalModelConfig, Marginal,
    PolarModelConfig, ProductPair, RadialProfile, SharedModel,
};

fn one() -> f64 {
    1.0
}

fn sqrt3() -> f64 {
    3f64.sqrt()
}

fn default_edge() -> f64 {
    0.05
}

fn gaussian_profile() -> String {
    "gaussian".into()
}

/// Source law by registered name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    GaussianPair,
    GaussianScaleMixture,
    Polar {
        d: f64,
    },
    Contaminated {
        epsilon: f64,
        f1: Marginal,
        f2: Marginal,
        g1: Marginal,
        g2: Marginal,
    },
    Elliptical {
        #[serde(alias = "K1")]
        k1: f64,
        #[serde(alias = "K2")]
        k2: f64,
        #[serde(default = "gaussian_profile", alias = "omega")]
        omega_name: String,
    },
    Independent {
        m1: Marginal,
        m2: Marginal,
    },
    LaplacePair {
        #[serde(default = "one")]
        scale: f64,
    },
    /// Uniform marginals; sampler and pdf only (no usable gradient).
    UniformPair {
        #[serde(default = "sqrt3")]
        half_width: f64,
    },
    /// Uniform marginals with Gaussian-smoothed edges, so scores exist.
    SmoothedUniformPair {
        #[serde(default = "sqrt3")]
        half_width: f64,
        #[serde(default = "default_edge")]
        edge: f64,
    },
    /// `(a s1, b s2)` for an inner model.
    Scaled {
        inner: Box<ModelSpec>,
        a: f64,
        b: f64,
    },
}

impl ModelSpec {
    pub fn build(&self) -> Result<SharedModel> {
        let pair = |m1: Marginal, m2: Marginal, label: &str| -> Result<SharedModel> {
            Ok(Arc::new(ProductPair::new(m1, m2)?.with_label(label)))
        };
        Ok(match self {
            Self::GaussianPair => Arc::new(make_gaussian_pair()),
            Self::GaussianScaleMixture => Arc::new(make_gaussian_scale_mixture()),
            Self::Polar { d } => {
                if !d.is_finite() {
                    return Err(BssError::InvalidParameter(format!("polar d must be finite, got {d}")));
                }
                Arc::new(make_polar_dependent(PolarModelConfig { d: *d }))
            }
            Self::Contaminated {
                epsilon,
                f1,
                f2,
                g1,
                g2,
            } => Arc::new(make_contaminated(ContaminationConfig {
                epsilon: *epsilon,
                f1: *f1,
                f2: *f2,
                g1: *g1,
                g2: *g2,
            })?),
            Self::Elliptical { k1, k2, omega_name } => Arc::new(make_elliptical(EllipticalModelConfig {
                omega: RadialProfile::from_name(omega_name)?,
                k1: *k1,
                k2: *k2,
            })?),
            Self::Independent { m1, m2 } => Arc::new(ProductPair::new(*m1, *m2)?),
            Self::LaplacePair { scale } => pair(
                Marginal::Laplace { scale: *scale },
                Marginal::Laplace { scale: *scale },
                "laplace_pair",
            )?,
            Self::UniformPair { half_width } => pair(
                Marginal::Uniform {
                    half_width: *half_width,
                },
                Marginal::Uniform {
                    half_width: *half_width,
                },
                "uniform_pair",
            )?,
            Self::SmoothedUniformPair { half_width, edge } => {
                let m = Marginal::SmoothedUniform {
                    half_width: *half_width,
                    edge: *edge,
                };
                pair(m, m, "smoothed_uniform_pair")?
            }
            Self::Scaled { inner, a, b } => Arc::new(AffineModel::new(inner.build()?, (*a, *b), (0.0, 0.0))?),
        })
    }
}

fn default_g() -> String {
    "cubic".into()
}

fn default_offset() -> ScoreOffset {
    ScoreOffset::Centered
}

/// Nonlinearity by registered name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum HSpec {
    ClassicalCubic,
    Absvalue,
    Classical {
        #[serde(default = "default_g", alias = "g")]
        g_name: String,
    },
    /// Built from the scenario model's own score.
    ScoreBased {
        #[serde(default = "default_offset")]
        offset: ScoreOffset,
    },
}

impl HSpec {
    pub fn build(&self, model: &SharedModel) -> Result<HMatrix> {
        match self {
            Self::ClassicalCubic => Ok(make_classical_cubic()),
            Self::Absvalue => Ok(make_absvalue()),
            Self::Classical { g_name } => make_classical(OddFunctionPair::from_name(g_name)?),
            Self::ScoreBased { offset } => make_score_based(model.clone(), *offset),
        }
    }
}

fn default_mc_samples() -> usize {
    200_000
}

fn default_nodes() -> usize {
    DEFAULT_QUADRATURE_NODES
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum EngineSpec {
    MonteCarlo {
        #[serde(default = "default_mc_samples", alias = "n")]
        samples: usize,
        #[serde(default)]
        seed: u64,
    },
    Quadrature {
        #[serde(default = "default_nodes")]
        nodes: usize,
    },
}

impl Default for EngineSpec {
    fn default() -> Self {
        Self::Quadrature {
            nodes: DEFAULT_QUADRATURE_NODES,
        }
    }
}

impl EngineSpec {
    pub fn build(&self) -> Result<ExpectationEngine> {
        match *self {
            Self::MonteCarlo { samples, seed } => ExpectationEngine::monte_carlo(samples, seed),
            Self::Quadrature { nodes } => ExpectationEngine::quadrature(nodes),
        }
    }
}

fn default_seeds() -> Vec<u64> {
    (1..=10).collect()
}

fn default_thinning() -> usize {
    DEFAULT_THINNING
}

fn default_tolerance() -> f64 {
    0.15
}

/// One experiment: a source law, a nonlinearity, a step size and a budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub model: ModelSpec,
    pub h: HSpec,
    pub mu: f64,
    pub n_steps: u64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Explicit mixing matrix, row-major. Overrides `mixing_seed`.
    #[serde(default)]
    pub mixing: Option<[[f64; 2]; 2]>,
    /// One random mixing matrix shared by every seed. Without it (and
    /// without `mixing`) each seed draws its own.
    #[serde(default)]
    pub mixing_seed: Option<u64>,
    #[serde(default)]
    pub engine: EngineSpec,
    #[serde(default = "default_thinning")]
    pub thinning: usize,
    /// Index below which a run counts as converged.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(BssError::InvalidParameter(format!("mu must be finite and ≥ 0, got {}", self.mu)));
        }
        if self.n_steps == 0 {
            return Err(BssError::InvalidParameter("n_steps must be ≥ 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(BssError::InvalidParameter("seeds must not be empty".into()));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(BssError::InvalidParameter("tolerance must be positive".into()));
        }
        if let Some(a) = self.mixing {
            MixingMatrix::new(Mat2::new(a[0][0], a[0][1], a[1][0], a[1][1]))?;
        }
        Ok(())
    }

    /// Mixing matrix used for `seed`.
    pub fn mixing_for(&self, seed: u64) -> MixingMatrix {
        if let Some(a) = self.mixing {
            MixingMatrix::new(Mat2::new(a[0][0], a[0][1], a[1][0], a[1][1]))
                .expect("validated mixing matrix")
        } else {
            MixingMatrix::random(self.mixing_seed.unwrap_or(seed))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_scenario_gets_defaults() {
        let s = Scenario::from_json(
            r#"{"model":{"name":"polar","d":1.0},"h":{"name":"absvalue"},"mu":0.01,"n_steps":10}"#,
        )
        .unwrap();
        assert_eq!(s.seeds, (1..=10).collect::<Vec<_>>());
        assert_eq!(s.thinning, DEFAULT_THINNING);
        assert_eq!(s.engine, EngineSpec::default());
        assert_eq!(s.model.build().unwrap().label(), "polar(d=1)");
    }

    #[test]
    fn unknown_names_are_rejected() {
        let bad = r#"{"model":{"name":"cauchy_pair"},"h":{"name":"absvalue"},"mu":0.01,"n_steps":10}"#;
        assert!(matches!(Scenario::from_json(bad), Err(BssError::Json(_))));
        let bad = r#"{"model":{"name":"gaussian_pair"},"h":{"name":"classical","g_name":"cosh"},"mu":0.01,"n_steps":10}"#;
        let s = Scenario::from_json(bad).unwrap();
        assert!(s.h.build(&s.model.build().unwrap()).is_err());
    }

    #[test]
    fn every_registered_model_builds() {
        let specs = [
            r#"{"name":"gaussian_pair"}"#,
            r#"{"name":"gaussian_scale_mixture"}"#,
            r#"{"name":"polar","d":0.0}"#,
            r#"{"name":"contaminated","epsilon":0.5,"f1":{"kind":"gaussian","sd":1.0},"f2":{"kind":"gaussian","sd":2.0},"g1":{"kind":"gaussian","sd":2.0},"g2":{"kind":"gaussian","sd":1.0}}"#,
            r#"{"name":"elliptical","K1":2.0,"K2":3.0}"#,
            r#"{"name":"elliptical","k1":1.0,"k2":1.0,"omega_name":"disk"}"#,
            r#"{"name":"laplace_pair"}"#,
            r#"{"name":"uniform_pair"}"#,
            r#"{"name":"smoothed_uniform_pair"}"#,
            r#"{"name":"scaled","inner":{"name":"gaussian_pair"},"a":2.0,"b":0.5}"#,
        ];
        for s in specs {
            let m: ModelSpec = serde_json::from_str(s).unwrap();
            m.build().unwrap_or_else(|e| panic!("{s}: {e}"));
        }
    }

    #[test]
    fn explicit_mixing_is_shared() {
        let s = Scenario::from_json(
            r#"{"model":{"name":"gaussian_pair"},"h":{"name":"classical_cubic"},"mu":0.0,"n_steps":1,"mixing":[[1.0,0.5],[0.0,1.0]]}"#,
        )
        .unwrap();
        assert_eq!(s.mixing_for(3).matrix(), Mat2::new(1.0, 0.5, 0.0, 1.0));
        let singular = r#"{"model":{"name":"gaussian_pair"},"h":{"name":"classical_cubic"},"mu":0.0,"n_steps":1,"mixing":[[1.0,1.0],[1.0,1.0]]}"#;
        assert!(Scenario::from_json(singular).is_err());
    }
}
