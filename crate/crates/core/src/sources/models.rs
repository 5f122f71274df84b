use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{box_boundary, Marginal, SamplePair, SourceModel};
use crate::error::{BssError, Result};
use crate::quadrature::{gauss_laguerre, gauss_legendre, Rule1D, Rule2D};

/// Independent sources with the given marginals.
#[derive(Debug, Clone)]
pub struct ProductPair {
    pub m1: Marginal,
    pub m2: Marginal,
    label: String,
}

impl ProductPair {
    pub fn new(m1: Marginal, m2: Marginal) -> Result<Self> {
        m1.validate().map_err(BssError::InvalidParameter)?;
        m2.validate().map_err(BssError::InvalidParameter)?;
        Ok(Self {
            m1,
            m2,
            label: format!("{}x{}", m1.label(), m2.label()),
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

/// Independent pair; panics on invalid marginal parameters.
pub fn make_independent(m1: Marginal, m2: Marginal) -> ProductPair {
    ProductPair::new(m1, m2).expect("valid marginals")
}

/// Two independent unit-variance Gaussians.
pub fn make_gaussian_pair() -> ProductPair {
    make_independent(Marginal::standard_gaussian(), Marginal::standard_gaussian())
        .with_label("gaussian_pair")
}

fn product_grad(m1: &Marginal, m2: &Marginal, s: SamplePair) -> Option<(f64, f64)> {
    let (f1, f2) = (m1.pdf(s.s1), m2.pdf(s.s2));
    Some((m1.dpdf(s.s1)? * f2, f1 * m2.dpdf(s.s2)?))
}

impl SourceModel for ProductPair {
    fn label(&self) -> String {
        self.label.clone()
    }

    fn draw(&self, rng: &mut dyn RngCore) -> SamplePair {
        let s1 = self.m1.sample(rng);
        let s2 = self.m2.sample(rng);
        SamplePair::new(s1, s2)
    }

    fn pdf(&self, s: SamplePair) -> Option<f64> {
        Some(self.m1.pdf(s.s1) * self.m2.pdf(s.s2))
    }

    fn pdf_grad(&self, s: SamplePair) -> Option<(f64, f64)> {
        product_grad(&self.m1, &self.m2, s)
    }

    fn score(&self, s: SamplePair) -> Option<(f64, f64)> {
        Some((self.m1.score(s.s1)?, self.m2.score(s.s2)?))
    }

    fn has_pdf(&self) -> bool {
        true
    }

    fn has_gradient(&self) -> bool {
        self.m1.dpdf(0.0).is_some() && self.m2.dpdf(0.0).is_some()
    }

    fn quadrature(&self, nodes: usize) -> Option<Rule2D> {
        Some(Rule2D::tensor(&self.m1.rule(nodes), &self.m2.rule(nodes)))
    }

    fn second_moments(&self) -> (f64, f64) {
        (self.m1.second_moment(), self.m2.second_moment())
    }

    fn tail_probe(&self) -> Vec<SamplePair> {
        box_boundary(self.m1.extent(), self.m2.extent(), 16)
    }

    fn marginals(&self) -> Option<(Marginal, Marginal)> {
        Some((self.m1, self.m2))
    }
}

/// ε-contamination of a nominal independent pair by an alternative one:
/// `f = (1−ε) f1 f2 + ε g1 g2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContaminationConfig {
    pub epsilon: f64,
    pub f1: Marginal,
    pub f2: Marginal,
    pub g1: Marginal,
    pub g2: Marginal,
}

#[derive(Debug, Clone)]
pub struct ContaminatedPair {
    cfg: ContaminationConfig,
    label: String,
}

pub fn make_contaminated(cfg: ContaminationConfig) -> Result<ContaminatedPair> {
    if !(0.0..=1.0).contains(&cfg.epsilon) {
        return Err(BssError::InvalidParameter(format!(
            "epsilon must lie in [0, 1], got {}",
            cfg.epsilon
        )));
    }
    for m in [cfg.f1, cfg.f2, cfg.g1, cfg.g2] {
        m.validate().map_err(BssError::InvalidParameter)?;
    }
    Ok(ContaminatedPair {
        cfg,
        label: format!(
            "contaminated(eps={}, {}x{} | {}x{})",
            cfg.epsilon,
            cfg.f1.label(),
            cfg.f2.label(),
            cfg.g1.label(),
            cfg.g2.label()
        ),
    })
}

/// With probability 1/2 independent `N(0,1), N(0,4)`, otherwise independent
/// `N(0,4), N(0,1)`.
pub fn make_gaussian_scale_mixture() -> ContaminatedPair {
    let mut m = make_contaminated(ContaminationConfig {
        epsilon: 0.5,
        f1: Marginal::gaussian(1.0),
        f2: Marginal::gaussian(2.0),
        g1: Marginal::gaussian(2.0),
        g2: Marginal::gaussian(1.0),
    })
    .expect("valid configuration");
    m.label = "gaussian_scale_mixture".into();
    m
}

impl ContaminatedPair {
    pub fn config(&self) -> &ContaminationConfig {
        &self.cfg
    }

    fn components(&self) -> [(f64, Marginal, Marginal); 2] {
        let c = &self.cfg;
        [(1.0 - c.epsilon, c.f1, c.f2), (c.epsilon, c.g1, c.g2)]
    }
}

impl SourceModel for ContaminatedPair {
    fn label(&self) -> String {
        self.label.clone()
    }

    fn draw(&self, rng: &mut dyn RngCore) -> SamplePair {
        let u: f64 = rng.random();
        let c = &self.cfg;
        let (m1, m2) = if u < c.epsilon { (c.g1, c.g2) } else { (c.f1, c.f2) };
        let s1 = m1.sample(rng);
        let s2 = m2.sample(rng);
        SamplePair::new(s1, s2)
    }

    fn pdf(&self, s: SamplePair) -> Option<f64> {
        Some(
            self.components()
                .iter()
                .map(|(p, m1, m2)| p * m1.pdf(s.s1) * m2.pdf(s.s2))
                .sum(),
        )
    }

    fn pdf_grad(&self, s: SamplePair) -> Option<(f64, f64)> {
        let mut g = (0.0, 0.0);
        for (p, m1, m2) in self.components() {
            let (a, b) = product_grad(&m1, &m2, s)?;
            g.0 += p * a;
            g.1 += p * b;
        }
        Some(g)
    }

    fn has_pdf(&self) -> bool {
        true
    }

    fn has_gradient(&self) -> bool {
        self.components()
            .iter()
            .all(|(_, a, b)| a.dpdf(0.0).is_some() && b.dpdf(0.0).is_some())
    }

    fn quadrature(&self, nodes: usize) -> Option<Rule2D> {
        let parts = self
            .components()
            .into_iter()
            .filter(|(p, _, _)| *p > 0.0)
            .map(|(p, m1, m2)| (p, Rule2D::tensor(&m1.rule(nodes), &m2.rule(nodes))))
            .collect();
        Some(Rule2D::mixture(parts))
    }

    fn second_moments(&self) -> (f64, f64) {
        self.components().iter().fold((0.0, 0.0), |acc, (p, m1, m2)| {
            (acc.0 + p * m1.second_moment(), acc.1 + p * m2.second_moment())
        })
    }

    fn tail_probe(&self) -> Vec<SamplePair> {
        let c = &self.cfg;
        box_boundary(
            c.f1.extent().max(c.g1.extent()),
            c.f2.extent().max(c.g2.extent()),
            16,
        )
    }

    fn marginals(&self) -> Option<(Marginal, Marginal)> {
        let c = &self.cfg;
        if c.epsilon == 0.0 || (c.f1 == c.g1 && c.f2 == c.g2) {
            Some((c.f1, c.f2))
        } else if c.epsilon == 1.0 {
            Some((c.g1, c.g2))
        } else {
            None
        }
    }
}

/// Dependent pair from polar coordinates: `r ~ U[0,1]`, `θ ~ U[−π,π]`,
/// `s1 = r cos θ`, `s2 = r (sin θ + d sin²θ sgn(sin θ))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarModelConfig {
    pub d: f64,
}

/// The analytic density is only available for `d = 0` (the disk law
/// `1 / (2π r)`); for other `d` the model is sampler-only.
#[derive(Debug, Clone, Copy)]
pub struct PolarModel {
    pub d: f64,
}

pub fn make_polar_dependent(cfg: PolarModelConfig) -> PolarModel {
    PolarModel { d: cfg.d }
}

impl PolarModel {
    fn is_disk(&self) -> bool {
        self.d == 0.0
    }
}

impl SourceModel for PolarModel {
    fn label(&self) -> String {
        format!("polar(d={})", self.d)
    }

    fn draw(&self, rng: &mut dyn RngCore) -> SamplePair {
        let r: f64 = rng.random();
        let theta: f64 = rng.random_range(-PI..PI);
        let (s, c) = theta.sin_cos();
        SamplePair::new(r * c, r * (s + self.d * s * s * s.signum()))
    }

    fn pdf(&self, s: SamplePair) -> Option<f64> {
        if !self.is_disk() {
            return None;
        }
        let r = s.s1.hypot(s.s2);
        Some(if r > 1.0 {
            0.0
        } else if r == 0.0 {
            f64::INFINITY
        } else {
            1.0 / (2.0 * PI * r)
        })
    }

    fn pdf_grad(&self, s: SamplePair) -> Option<(f64, f64)> {
        if !self.is_disk() {
            return None;
        }
        let r = s.s1.hypot(s.s2);
        if r > 1.0 || r == 0.0 {
            return Some((0.0, 0.0));
        }
        let k = -1.0 / (2.0 * PI * r * r * r);
        Some((k * s.s1, k * s.s2))
    }

    fn score(&self, s: SamplePair) -> Option<(f64, f64)> {
        if !self.is_disk() {
            return None;
        }
        let r2 = s.s1 * s.s1 + s.s2 * s.s2;
        if r2 > 1.0 || r2 == 0.0 {
            return Some((0.0, 0.0));
        }
        Some((-s.s1 / r2, -s.s2 / r2))
    }

    fn has_pdf(&self) -> bool {
        self.is_disk()
    }

    fn has_gradient(&self) -> bool {
        self.is_disk()
    }

    fn quadrature(&self, nodes: usize) -> Option<Rule2D> {
        self.is_disk()
            .then(|| Rule2D::polar(&gauss_legendre(nodes, 0.0, 1.0), 2 * nodes, 1.0, 1.0))
    }

    fn second_moments(&self) -> (f64, f64) {
        // E r² = 1/3; E|sin θ|³ = 4/(3π); E sin⁴ θ = 3/8
        let d = self.d;
        let e2 = (0.5 + 2.0 * d * 4.0 / (3.0 * PI) + d * d * 3.0 / 8.0) / 3.0;
        (1.0 / 6.0, e2)
    }

    fn tail_probe(&self) -> Vec<SamplePair> {
        let rho = (1.0 + self.d.abs()) * (1.0 - 1e-9);
        ellipse_points(rho, 1.0, 1.0, 64)
    }
}

fn ellipse_points(rho: f64, sx: f64, sy: f64, n: usize) -> Vec<SamplePair> {
    (0..n)
        .map(|k| {
            let th = 2.0 * PI * (k as f64 + 0.5) / n as f64;
            SamplePair::new(rho * th.cos() / sx, rho * th.sin() / sy)
        })
        .collect()
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// User-supplied unnormalized profile `ω₀(z)` with its derivative.
#[derive(Clone)]
pub struct CustomProfile {
    pub name: String,
    pub omega: ScalarFn,
    pub domega: ScalarFn,
}

impl fmt::Debug for CustomProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomProfile").field("name", &self.name).finish()
    }
}

/// Unnormalized univariate profile `ω₀(z)`, `z = K2 s1² + K1 s2²`.
#[derive(Debug, Clone)]
pub enum RadialProfile {
    /// `exp(−z/2)`
    Gaussian,
    /// `exp(−√z)`
    ExpSqrt,
    /// `z^{−1/2}` on `z ≤ 1` (the polar `d = 0` law when `K1 = K2 = 1`).
    Disk,
    /// Indicator of `z ≤ 1`; discontinuous, so no gradient.
    UniformDisk,
    Custom(CustomProfile),
}

impl RadialProfile {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "gaussian" => Ok(Self::Gaussian),
            "exp_sqrt" => Ok(Self::ExpSqrt),
            "disk" => Ok(Self::Disk),
            "uniform_disk" => Ok(Self::UniformDisk),
            other => Err(BssError::UnknownName {
                kind: "omega profile",
                name: other.into(),
            }),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Self::Gaussian => "gaussian",
            Self::ExpSqrt => "exp_sqrt",
            Self::Disk => "disk",
            Self::UniformDisk => "uniform_disk",
            Self::Custom(c) => &c.name,
        }
    }

    fn omega(&self, z: f64) -> f64 {
        match self {
            Self::Gaussian => (-0.5 * z).exp(),
            Self::ExpSqrt => (-z.sqrt()).exp(),
            Self::Disk => {
                if z > 0.0 && z <= 1.0 {
                    1.0 / z.sqrt()
                } else if z == 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            Self::UniformDisk => {
                if z <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Custom(c) => (c.omega)(z),
        }
    }

    /// `ω₀'(z) / ω₀(z)`; `None` when the profile has no derivative.
    fn log_deriv(&self, z: f64) -> Option<f64> {
        match self {
            Self::Gaussian => Some(-0.5),
            Self::ExpSqrt => Some(if z > 0.0 { -0.5 / z.sqrt() } else { 0.0 }),
            Self::Disk => Some(if z > 0.0 && z <= 1.0 { -0.5 / z } else { 0.0 }),
            Self::UniformDisk => None,
            Self::Custom(c) => Some((c.domega)(z) / (c.omega)(z).max(super::DENSITY_FLOOR)),
        }
    }

    fn domega(&self, z: f64) -> Option<f64> {
        match self {
            Self::Custom(c) => Some((c.domega)(z)),
            Self::Disk if z <= 0.0 || z > 1.0 => Some(0.0),
            _ => Some(self.omega(z) * self.log_deriv(z)?),
        }
    }
}

/// Elliptically symmetric law `f(s1,s2) = ω(K2 s1² + K1 s2²)` with the
/// profile normalized so that `f` integrates to one.
#[derive(Debug, Clone)]
pub struct EllipticalModelConfig {
    pub omega: RadialProfile,
    pub k1: f64,
    pub k2: f64,
}

#[derive(Debug, Clone)]
pub struct EllipticalModel {
    cfg: EllipticalModelConfig,
    /// `∫₀^∞ ω₀(z) dz`
    profile_mass: f64,
    /// Radius in whitened coordinates beyond which the profile is negligible.
    radial_extent: f64,
    /// Tabulated inverse CDF of the whitened radius, custom profiles only.
    inverse_cdf: Option<Arc<Vec<f64>>>,
}

const CDF_TABLE: usize = 4096;

pub fn make_elliptical(cfg: EllipticalModelConfig) -> Result<EllipticalModel> {
    let (k1, k2) = (cfg.k1, cfg.k2);
    if !(k1.is_finite() && k2.is_finite() && k1 > 0.0 && k2 > 0.0) {
        return Err(BssError::InvalidParameter(format!(
            "K1 and K2 must be positive, got ({k1}, {k2})"
        )));
    }
    let (profile_mass, radial_extent, inverse_cdf) = match &cfg.omega {
        RadialProfile::Gaussian => (2.0, 12.0, None),
        RadialProfile::ExpSqrt => (2.0, 60.0, None),
        RadialProfile::Disk => (2.0, 1.0, None),
        RadialProfile::UniformDisk => (1.0, 1.0, None),
        RadialProfile::Custom(_) => {
            let (mass, extent) = radial_mass(&cfg.omega)?;
            let table = inverse_cdf_table(&cfg.omega, mass, extent);
            (mass, extent, Some(Arc::new(table)))
        }
    };
    Ok(EllipticalModel {
        cfg,
        profile_mass,
        radial_extent,
        inverse_cdf,
    })
}

/// `∫₀^∞ 2ρ ω₀(ρ²) dρ` on doubling panels; fails when the tail does not die out.
fn radial_mass(profile: &RadialProfile) -> Result<(f64, f64)> {
    let name = profile.name().to_string();
    let density = |rho: f64| 2.0 * rho * profile.omega(rho * rho);
    let mut total = gauss_legendre(32, 0.0, 1.0).expect(density);
    let (mut lo, mut hi) = (1.0_f64, 2.0_f64);
    loop {
        let piece = gauss_legendre(32, lo, hi).expect(density) * (hi - lo);
        if !piece.is_finite() || piece < 0.0 {
            return Err(BssError::NotNormalizable(name));
        }
        total += piece;
        if piece <= 1e-15 * total {
            break;
        }
        if hi > 1e9 {
            return Err(BssError::NotNormalizable(name));
        }
        lo = hi;
        hi *= 2.0;
    }
    if !(total.is_finite() && total > 0.0) {
        return Err(BssError::NotNormalizable(name));
    }
    Ok((total, hi))
}

fn inverse_cdf_table(profile: &RadialProfile, mass: f64, extent: f64) -> Vec<f64> {
    // cumulative radial mass on a fine grid, then invert by linear interpolation
    let steps = 16 * CDF_TABLE;
    let h = extent / steps as f64;
    let mut cdf = Vec::with_capacity(steps + 1);
    let mut acc = 0.0;
    cdf.push(0.0);
    let gl = gauss_legendre(4, 0.0, 1.0);
    for i in 0..steps {
        let a = i as f64 * h;
        acc += gl.expect(|t| {
            let rho = a + t * h;
            2.0 * rho * profile.omega(rho * rho)
        }) * h
            / mass;
        cdf.push(acc.min(1.0));
    }
    let mut table = Vec::with_capacity(CDF_TABLE + 1);
    let mut j = 0;
    for k in 0..=CDF_TABLE {
        let u = k as f64 / CDF_TABLE as f64;
        while j + 1 < cdf.len() - 1 && cdf[j + 1] < u {
            j += 1;
        }
        let (c0, c1) = (cdf[j], cdf[j + 1]);
        let frac = if c1 > c0 { ((u - c0) / (c1 - c0)).clamp(0.0, 1.0) } else { 0.0 };
        table.push((j as f64 + frac) * h);
    }
    table
}

impl EllipticalModel {
    pub fn config(&self) -> &EllipticalModelConfig {
        &self.cfg
    }

    fn norm(&self) -> f64 {
        (self.cfg.k1 * self.cfg.k2).sqrt() / (PI * self.profile_mass)
    }

    fn z(&self, s: SamplePair) -> f64 {
        self.cfg.k2 * s.s1 * s.s1 + self.cfg.k1 * s.s2 * s.s2
    }

    fn whitening(&self) -> (f64, f64) {
        (self.cfg.k2.sqrt(), self.cfg.k1.sqrt())
    }

    fn sample_radius(&self, rng: &mut dyn RngCore) -> f64 {
        let mut u = || -> f64 { 1.0 - rng.random::<f64>() };
        match &self.cfg.omega {
            RadialProfile::Gaussian => (-2.0 * u().ln()).sqrt(),
            RadialProfile::ExpSqrt => {
                let a = u();
                let b = 1.0 - rng.random::<f64>();
                -(a * b).ln()
            }
            RadialProfile::Disk => rng.random::<f64>(),
            RadialProfile::UniformDisk => rng.random::<f64>().sqrt(),
            RadialProfile::Custom(_) => {
                let table = self.inverse_cdf.as_ref().expect("custom profile table");
                let x = rng.random::<f64>() * CDF_TABLE as f64;
                let k = (x as usize).min(CDF_TABLE - 1);
                let frac = x - k as f64;
                table[k] + frac * (table[k + 1] - table[k])
            }
        }
    }

    fn radial_rule(&self, n: usize) -> Rule1D {
        match &self.cfg.omega {
            RadialProfile::Gaussian => {
                let mut r = gauss_laguerre(n, 0.0);
                r.nodes.iter_mut().for_each(|t| *t = (2.0 * *t).sqrt());
                r
            }
            RadialProfile::ExpSqrt => gauss_laguerre(n, 1.0),
            RadialProfile::Disk => gauss_legendre(n, 0.0, 1.0),
            RadialProfile::UniformDisk => {
                let mut r = gauss_legendre(n, 0.0, 1.0);
                for (w, &x) in r.weights.iter_mut().zip(&r.nodes) {
                    *w *= 2.0 * x;
                }
                r
            }
            RadialProfile::Custom(_) => {
                let panels = 8;
                let h = self.radial_extent / panels as f64;
                let per = n.div_ceil(panels).max(4);
                let p: Vec<(f64, f64, usize)> =
                    (0..panels).map(|i| (i as f64 * h, (i + 1) as f64 * h, per)).collect();
                let omega = &self.cfg.omega;
                let mass = self.profile_mass;
                crate::quadrature::composite_weighted(&p, |rho| {
                    2.0 * rho * omega.omega(rho * rho) / mass
                })
            }
        }
    }

    fn mean_radius_sq(&self) -> f64 {
        match &self.cfg.omega {
            RadialProfile::Gaussian => 2.0,
            RadialProfile::ExpSqrt => 6.0,
            RadialProfile::Disk => 1.0 / 3.0,
            RadialProfile::UniformDisk => 0.5,
            RadialProfile::Custom(_) => self.radial_rule(256).expect(|r| r * r),
        }
    }
}

impl SourceModel for EllipticalModel {
    fn label(&self) -> String {
        format!(
            "elliptical(K1={}, K2={}, omega={})",
            self.cfg.k1,
            self.cfg.k2,
            self.cfg.omega.name()
        )
    }

    fn draw(&self, rng: &mut dyn RngCore) -> SamplePair {
        let rho = self.sample_radius(rng);
        let theta: f64 = rng.random_range(-PI..PI);
        let (wx, wy) = self.whitening();
        SamplePair::new(rho * theta.cos() / wx, rho * theta.sin() / wy)
    }

    fn pdf(&self, s: SamplePair) -> Option<f64> {
        Some(self.norm() * self.cfg.omega.omega(self.z(s)))
    }

    fn pdf_grad(&self, s: SamplePair) -> Option<(f64, f64)> {
        let d = self.norm() * self.cfg.omega.domega(self.z(s))?;
        Some((2.0 * self.cfg.k2 * s.s1 * d, 2.0 * self.cfg.k1 * s.s2 * d))
    }

    fn score(&self, s: SamplePair) -> Option<(f64, f64)> {
        let z = self.z(s);
        if self.cfg.omega.omega(z) <= 0.0 {
            return self.has_gradient().then_some((0.0, 0.0));
        }
        let l = self.cfg.omega.log_deriv(z)?;
        Some((2.0 * self.cfg.k2 * s.s1 * l, 2.0 * self.cfg.k1 * s.s2 * l))
    }

    fn has_pdf(&self) -> bool {
        true
    }

    fn has_gradient(&self) -> bool {
        !matches!(self.cfg.omega, RadialProfile::UniformDisk)
    }

    fn quadrature(&self, nodes: usize) -> Option<Rule2D> {
        let (wx, wy) = self.whitening();
        Some(Rule2D::polar(&self.radial_rule(nodes), 2 * nodes, wx, wy))
    }

    fn second_moments(&self) -> (f64, f64) {
        let m = self.mean_radius_sq();
        (m / (2.0 * self.cfg.k2), m / (2.0 * self.cfg.k1))
    }

    fn tail_probe(&self) -> Vec<SamplePair> {
        let (wx, wy) = self.whitening();
        let rho = match self.cfg.omega {
            RadialProfile::Disk | RadialProfile::UniformDisk => 1.0 - 1e-9,
            _ => self.radial_extent,
        };
        ellipse_points(rho, wx, wy, 64)
    }

    fn marginals(&self) -> Option<(Marginal, Marginal)> {
        match self.cfg.omega {
            RadialProfile::Gaussian => Some((
                Marginal::gaussian(1.0 / self.cfg.k2.sqrt()),
                Marginal::gaussian(1.0 / self.cfg.k1.sqrt()),
            )),
            _ => None,
        }
    }
}

/// Push-forward `(s1, s2) ↦ (a·s1 + m1, b·s2 + m2)` with `a, b > 0`.
#[derive(Debug, Clone)]
pub struct AffineModel {
    inner: Arc<dyn SourceModel>,
    scale: (f64, f64),
    shift: (f64, f64),
}

impl AffineModel {
    pub fn new(inner: Arc<dyn SourceModel>, scale: (f64, f64), shift: (f64, f64)) -> Result<Self> {
        if !(scale.0 > 0.0 && scale.1 > 0.0 && scale.0.is_finite() && scale.1.is_finite()) {
            return Err(BssError::InvalidParameter(format!(
                "axis scales must be positive, got {scale:?}"
            )));
        }
        Ok(Self { inner, scale, shift })
    }

    fn pull_back(&self, s: SamplePair) -> SamplePair {
        SamplePair::new(
            (s.s1 - self.shift.0) / self.scale.0,
            (s.s2 - self.shift.1) / self.scale.1,
        )
    }

    fn push(&self, s: SamplePair) -> SamplePair {
        SamplePair::new(
            self.scale.0 * s.s1 + self.shift.0,
            self.scale.1 * s.s2 + self.shift.1,
        )
    }
}

impl SourceModel for AffineModel {
    fn label(&self) -> String {
        format!(
            "affine({}; scale={:?}, shift={:?})",
            self.inner.label(),
            self.scale,
            self.shift
        )
    }

    fn draw(&self, rng: &mut dyn RngCore) -> SamplePair {
        self.push(self.inner.draw(rng))
    }

    fn pdf(&self, s: SamplePair) -> Option<f64> {
        Some(self.inner.pdf(self.pull_back(s))? / (self.scale.0 * self.scale.1))
    }

    fn pdf_grad(&self, s: SamplePair) -> Option<(f64, f64)> {
        let (g1, g2) = self.inner.pdf_grad(self.pull_back(s))?;
        let j = self.scale.0 * self.scale.1;
        Some((g1 / (j * self.scale.0), g2 / (j * self.scale.1)))
    }

    fn score(&self, s: SamplePair) -> Option<(f64, f64)> {
        let (u1, u2) = self.inner.score(self.pull_back(s))?;
        Some((u1 / self.scale.0, u2 / self.scale.1))
    }

    fn has_pdf(&self) -> bool {
        self.inner.has_pdf()
    }

    fn has_gradient(&self) -> bool {
        self.inner.has_gradient()
    }

    fn quadrature(&self, nodes: usize) -> Option<Rule2D> {
        Some(self.inner.quadrature(nodes)?.map(|p| self.push(p)))
    }

    fn second_moments(&self) -> (f64, f64) {
        let (m1, m2) = self.inner.second_moments();
        let (a, b) = self.scale;
        let (c, d) = self.shift;
        (a * a * m1 + c * c, b * b * m2 + d * d)
    }

    fn tail_probe(&self) -> Vec<SamplePair> {
        self.inner.tail_probe().into_iter().map(|p| self.push(p)).collect()
    }
}

/// Exchanges the two sources.
#[derive(Debug, Clone)]
pub struct AxisSwapped {
    inner: Arc<dyn SourceModel>,
}

impl AxisSwapped {
    pub fn new(inner: Arc<dyn SourceModel>) -> Self {
        Self { inner }
    }
}

fn swap(s: SamplePair) -> SamplePair {
    SamplePair::new(s.s2, s.s1)
}

impl SourceModel for AxisSwapped {
    fn label(&self) -> String {
        format!("swapped({})", self.inner.label())
    }

    fn draw(&self, rng: &mut dyn RngCore) -> SamplePair {
        swap(self.inner.draw(rng))
    }

    fn pdf(&self, s: SamplePair) -> Option<f64> {
        self.inner.pdf(swap(s))
    }

    fn pdf_grad(&self, s: SamplePair) -> Option<(f64, f64)> {
        self.inner.pdf_grad(swap(s)).map(|(a, b)| (b, a))
    }

    fn score(&self, s: SamplePair) -> Option<(f64, f64)> {
        self.inner.score(swap(s)).map(|(a, b)| (b, a))
    }

    fn has_pdf(&self) -> bool {
        self.inner.has_pdf()
    }

    fn has_gradient(&self) -> bool {
        self.inner.has_gradient()
    }

    fn quadrature(&self, nodes: usize) -> Option<Rule2D> {
        Some(self.inner.quadrature(nodes)?.map(swap))
    }

    fn second_moments(&self) -> (f64, f64) {
        let (a, b) = self.inner.second_moments();
        (b, a)
    }

    fn tail_probe(&self) -> Vec<SamplePair> {
        self.inner.tail_probe().into_iter().map(swap).collect()
    }

    fn marginals(&self) -> Option<(Marginal, Marginal)> {
        self.inner.marginals().map(|(a, b)| (b, a))
    }
}
