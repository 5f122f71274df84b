use std::f64::consts::{PI, SQRT_2};

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::quadrature::{composite_weighted, gauss_laguerre, gauss_legendre, half_normal, Rule1D};

/// Univariate source law used as a building block for product and
/// contaminated pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Marginal {
    Gaussian {
        #[serde(default)]
        mean: f64,
        sd: f64,
    },
    /// Density `exp(-|x|/scale) / (2 scale)`.
    Laplace { scale: f64 },
    /// Uniform on `[-half_width, half_width]`. Discontinuous, so no gradient.
    Uniform { half_width: f64 },
    /// Uniform convolved with `N(0, edge²)`; smooth stand-in for a uniform
    /// wherever a density gradient is required.
    SmoothedUniform { half_width: f64, edge: f64 },
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

impl Marginal {
    pub fn standard_gaussian() -> Self {
        Marginal::Gaussian { mean: 0.0, sd: 1.0 }
    }

    pub fn gaussian(sd: f64) -> Self {
        Marginal::Gaussian { mean: 0.0, sd }
    }

    pub fn validate(&self) -> Result<(), String> {
        let ok = match *self {
            Marginal::Gaussian { mean, sd } => mean.is_finite() && sd.is_finite() && sd > 0.0,
            Marginal::Laplace { scale } => scale.is_finite() && scale > 0.0,
            Marginal::Uniform { half_width } => half_width.is_finite() && half_width > 0.0,
            Marginal::SmoothedUniform { half_width, edge } => {
                half_width.is_finite() && edge.is_finite() && edge > 0.0 && half_width > 8.0 * edge
            }
        };
        if ok {
            Ok(())
        } else {
            Err(format!("invalid marginal parameters {self:?}"))
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Marginal::Gaussian { mean: 0.0, sd } => format!("N(0,{})", sd * sd),
            Marginal::Gaussian { mean, sd } => format!("N({mean},{})", sd * sd),
            Marginal::Laplace { scale } => format!("Laplace({scale})"),
            Marginal::Uniform { half_width } => format!("U(-{half_width},{half_width})"),
            Marginal::SmoothedUniform { half_width, edge } => {
                format!("U(-{half_width},{half_width})*N(0,{})", edge * edge)
            }
        }
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        match *self {
            Marginal::Gaussian { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
            Marginal::Laplace { scale } => {
                let u: f64 = rng.random::<f64>();
                let e = -(1.0 - u).ln();
                if rng.random::<bool>() {
                    scale * e
                } else {
                    -scale * e
                }
            }
            Marginal::Uniform { half_width } => rng.random_range(-half_width..half_width),
            Marginal::SmoothedUniform { half_width, edge } => {
                let z: f64 = StandardNormal.sample(rng);
                rng.random_range(-half_width..half_width) + edge * z
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            Marginal::Gaussian { mean, sd } => std_normal_pdf((x - mean) / sd) / sd,
            Marginal::Laplace { scale } => (-x.abs() / scale).exp() / (2.0 * scale),
            Marginal::Uniform { half_width } => {
                if x.abs() <= half_width {
                    0.5 / half_width
                } else {
                    0.0
                }
            }
            Marginal::SmoothedUniform { half_width, edge } => {
                // Φ((x+a)/σ) − Φ((x−a)/σ), written to avoid cancellation in the tails
                let a = half_width;
                let mass = if x >= 0.0 {
                    std_normal_cdf((a - x) / edge) - std_normal_cdf((-a - x) / edge)
                } else {
                    std_normal_cdf((x + a) / edge) - std_normal_cdf((x - a) / edge)
                };
                mass / (2.0 * a)
            }
        }
    }

    /// Derivative of the density, when it exists almost everywhere.
    pub fn dpdf(&self, x: f64) -> Option<f64> {
        match *self {
            Marginal::Gaussian { mean, sd } => Some(-(x - mean) / (sd * sd) * self.pdf(x)),
            Marginal::Laplace { scale } => Some(-x.signum() / scale * self.pdf(x)),
            Marginal::Uniform { .. } => None,
            Marginal::SmoothedUniform { half_width, edge } => {
                let a = half_width;
                Some(
                    (std_normal_pdf((x + a) / edge) - std_normal_pdf((x - a) / edge))
                        / (2.0 * a * edge),
                )
            }
        }
    }

    /// Logarithmic derivative `f'(x)/f(x)`.
    pub fn score(&self, x: f64) -> Option<f64> {
        match *self {
            Marginal::Gaussian { mean, sd } => Some(-(x - mean) / (sd * sd)),
            Marginal::Laplace { scale } => Some(-x.signum() / scale),
            Marginal::Uniform { .. } => None,
            Marginal::SmoothedUniform { .. } => {
                let f = self.pdf(x).max(super::DENSITY_FLOOR);
                self.dpdf(x).map(|d| d / f)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Marginal::Gaussian { mean, .. } => mean,
            _ => 0.0,
        }
    }

    pub fn second_moment(&self) -> f64 {
        match *self {
            Marginal::Gaussian { mean, sd } => mean * mean + sd * sd,
            Marginal::Laplace { scale } => 2.0 * scale * scale,
            Marginal::Uniform { half_width } => half_width * half_width / 3.0,
            Marginal::SmoothedUniform { half_width, edge } => {
                half_width * half_width / 3.0 + edge * edge
            }
        }
    }

    pub fn sd(&self) -> f64 {
        let m = self.mean();
        (self.second_moment() - m * m).sqrt()
    }

    pub fn is_symmetric(&self) -> bool {
        self.mean() == 0.0
    }

    /// Probability rule with about `n` nodes.
    pub fn rule(&self, n: usize) -> Rule1D {
        let n = n.max(2);
        match *self {
            Marginal::Gaussian { mean, sd } => {
                // mirrored half-normal rule, so kinks at the mean integrate exactly
                let half = half_normal(n.div_ceil(2));
                let mut nodes: Vec<f64> = half.nodes.iter().rev().map(|r| mean - sd * r).collect();
                nodes.extend(half.nodes.iter().map(|r| mean + sd * r));
                let mut weights: Vec<f64> = half.weights.iter().rev().map(|w| 0.5 * w).collect();
                weights.extend(half.weights.iter().map(|w| 0.5 * w));
                Rule1D { nodes, weights }
            }
            Marginal::Laplace { scale } => {
                // split at the kink; each half is an Exp(1/scale) law
                let half = gauss_laguerre(n.div_ceil(2), 0.0);
                let neg = half.clone().map(0.0, -scale);
                let pos = half.map(0.0, scale);
                let mut r = Rule1D::mixture(vec![(0.5, neg), (0.5, pos)]);
                let mut idx: Vec<usize> = (0..r.len()).collect();
                idx.sort_by(|&i, &j| r.nodes[i].total_cmp(&r.nodes[j]));
                r = Rule1D {
                    nodes: idx.iter().map(|&i| r.nodes[i]).collect(),
                    weights: idx.iter().map(|&i| r.weights[i]).collect(),
                };
                r
            }
            Marginal::Uniform { half_width } => gauss_legendre(n, -half_width, half_width),
            Marginal::SmoothedUniform { half_width, edge } => {
                // each edge spans ±10σ around ±a and is split into four sub-panels
                let a = half_width;
                let n_sub = n.div_ceil(4).max(16);
                let mut panels = Vec::with_capacity(9);
                for centre in [-a, a] {
                    for k in 0..4 {
                        let lo = centre + edge * (-10.0 + 5.0 * k as f64);
                        panels.push((lo, lo + 5.0 * edge, n_sub));
                    }
                }
                panels.insert(4, (-a + 10.0 * edge, a - 10.0 * edge, n.div_ceil(4).max(8)));
                composite_weighted(&panels, |x| self.pdf(x))
            }
        }
    }

    /// Half-width of an interval carrying all but a negligible tail.
    pub fn extent(&self) -> f64 {
        match *self {
            Marginal::Gaussian { mean, sd } => mean.abs() + 10.0 * sd,
            Marginal::Laplace { scale } => 40.0 * scale,
            Marginal::Uniform { half_width } => half_width,
            Marginal::SmoothedUniform { half_width, edge } => half_width + 10.0 * edge,
        }
    }
}
