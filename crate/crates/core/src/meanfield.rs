//! Expectations over the source law, the deterministic mean-field map and
//! the scale equilibria `(c1, c2)` of the non-mixing limits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptive::Mat2;
use crate::error::{BssError, Result};
use crate::nonlinearity::HMatrix;
use crate::quadrature::Rule2D;
use crate::sources::{capability, sample, SamplePair, SourceModel};

pub const MIN_MC_SAMPLES: usize = 10_000;
pub const MIN_QUADRATURE_NODES: usize = 32;
pub const DEFAULT_QUADRATURE_NODES: usize = 64;
const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EngineMode {
    MonteCarlo { samples: usize, seed: u64 },
    Quadrature { nodes: usize },
}

/// How expectations `E[φ(s1, s2)]` are computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectationEngine {
    pub mode: EngineMode,
    pub target_rel_error: f64,
}

impl Default for ExpectationEngine {
    fn default() -> Self {
        Self {
            mode: EngineMode::Quadrature {
                nodes: DEFAULT_QUADRATURE_NODES,
            },
            target_rel_error: 1e-6,
        }
    }
}

/// Value with its standard error (Monte Carlo) or its change under halving
/// the node count (quadrature).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl ExpectationEngine {
    pub fn monte_carlo(samples: usize, seed: u64) -> Result<Self> {
        if samples < MIN_MC_SAMPLES {
            return Err(BssError::InvalidParameter(format!(
                "Monte Carlo engine needs at least {MIN_MC_SAMPLES} samples, got {samples}"
            )));
        }
        Ok(Self {
            mode: EngineMode::MonteCarlo { samples, seed },
            target_rel_error: 1e-2,
        })
    }

    pub fn quadrature(nodes: usize) -> Result<Self> {
        if nodes < MIN_QUADRATURE_NODES {
            return Err(BssError::InvalidParameter(format!(
                "quadrature engine needs at least {MIN_QUADRATURE_NODES} nodes per axis, got {nodes}"
            )));
        }
        Ok(Self {
            mode: EngineMode::Quadrature { nodes },
            target_rel_error: 1e-6,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            EngineMode::MonteCarlo { samples, seed } => Self::monte_carlo(samples, seed).map(|_| ()),
            EngineMode::Quadrature { nodes } => Self::quadrature(nodes).map(|_| ()),
        }
    }

    pub fn is_monte_carlo(&self) -> bool {
        matches!(self.mode, EngineMode::MonteCarlo { .. })
    }

    /// Builds the weighted point set once so repeated expectations are cheap.
    pub fn prepare(&self, model: &dyn SourceModel) -> Result<Measure> {
        self.validate()?;
        match self.mode {
            EngineMode::MonteCarlo { samples, seed } => {
                let points = sample(model, samples, seed);
                let w = 1.0 / samples as f64;
                Ok(Measure {
                    rule: Rule2D {
                        weights: vec![w; points.len()],
                        points,
                    },
                    coarse: None,
                    monte_carlo: true,
                })
            }
            EngineMode::Quadrature { nodes } => {
                let missing = || capability(model, "analytic pdf (quadrature engine)");
                if !model.has_pdf() {
                    return Err(missing());
                }
                let rule = model.quadrature(nodes).ok_or_else(missing)?;
                let coarse = model.quadrature((nodes / 2).max(8)).ok_or_else(missing)?;
                Ok(Measure {
                    rule,
                    coarse: Some(coarse),
                    monte_carlo: false,
                })
            }
        }
    }

    pub fn expect(
        &self,
        model: &dyn SourceModel,
        phi: impl Fn(SamplePair) -> f64 + Sync,
    ) -> Result<Estimate> {
        let m = self.prepare(model)?;
        let [e] = m.expect(|s| [phi(s)]);
        Ok(e)
    }
}

/// A prepared probability rule (quadrature nodes or equally weighted draws).
#[derive(Debug, Clone)]
pub struct Measure {
    rule: Rule2D,
    coarse: Option<Rule2D>,
    monte_carlo: bool,
}

fn weighted_sums<const N: usize>(
    rule: &Rule2D,
    phi: &(impl Fn(SamplePair) -> [f64; N] + Sync),
    squares: bool,
) -> ([f64; N], [f64; N]) {
    // fixed chunking and in-order reduction keep results independent of the thread count
    let partial: Vec<([f64; N], [f64; N])> = rule
        .points
        .par_chunks(CHUNK)
        .zip(rule.weights.par_chunks(CHUNK))
        .map(|(ps, ws)| {
            let mut s = [0.0; N];
            let mut q = [0.0; N];
            for (p, w) in ps.iter().zip(ws) {
                let v = phi(*p);
                for k in 0..N {
                    s[k] += w * v[k];
                    if squares {
                        q[k] += w * v[k] * v[k];
                    }
                }
            }
            (s, q)
        })
        .collect();
    let mut s = [0.0; N];
    let mut q = [0.0; N];
    for (ps, pq) in partial {
        for k in 0..N {
            s[k] += ps[k];
            q[k] += pq[k];
        }
    }
    (s, q)
}

impl Measure {
    pub fn len(&self) -> usize {
        self.rule.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rule.is_empty()
    }

    pub fn is_monte_carlo(&self) -> bool {
        self.monte_carlo
    }

    pub fn rule(&self) -> &Rule2D {
        &self.rule
    }

    /// The same measure with the two coordinates exchanged.
    pub fn swapped(&self) -> Self {
        let swap = |r: &Rule2D| r.clone().map(|s| SamplePair::new(s.s2, s.s1));
        Self {
            rule: swap(&self.rule),
            coarse: self.coarse.as_ref().map(swap),
            monte_carlo: self.monte_carlo,
        }
    }

    /// Point estimates only.
    pub fn mean<const N: usize>(&self, phi: impl Fn(SamplePair) -> [f64; N] + Sync) -> [f64; N] {
        weighted_sums(&self.rule, &phi, false).0
    }

    pub fn expect<const N: usize>(
        &self,
        phi: impl Fn(SamplePair) -> [f64; N] + Sync,
    ) -> [Estimate; N] {
        let (s, q) = weighted_sums(&self.rule, &phi, self.monte_carlo);
        let err: [f64; N] = if self.monte_carlo {
            let n = self.rule.len() as f64;
            std::array::from_fn(|k| ((q[k] - s[k] * s[k]).max(0.0) / (n - 1.0)).sqrt())
        } else {
            let c = weighted_sums(self.coarse.as_ref().expect("quadrature has a coarse rule"), &phi, false).0;
            std::array::from_fn(|k| (s[k] - c[k]).abs())
        };
        std::array::from_fn(|k| Estimate {
            value: s[k],
            error: err[k],
        })
    }
}

/// `E[H(C S)]` for a fixed nonlinearity and source law.
#[derive(Debug, Clone)]
pub struct MeanField {
    pub h: HMatrix,
    pub measure: Measure,
}

impl MeanField {
    pub fn new(h: &HMatrix, model: &dyn SourceModel, engine: &ExpectationEngine) -> Result<Self> {
        Ok(Self {
            h: h.clone(),
            measure: engine.prepare(model)?,
        })
    }

    pub fn expected_h(&self, c: &Mat2) -> Result<Mat2> {
        let (a, b, cc, d) = (c[(0, 0)], c[(0, 1)], c[(1, 0)], c[(1, 1)]);
        let h = &self.h;
        let v = self
            .measure
            .mean(|s| h.entries(a * s.s1 + b * s.s2, cc * s.s1 + d * s.s2));
        if v.iter().any(|x| !x.is_finite()) {
            return Err(BssError::NonFinite(format!("E[H(CS)] for `{}`", h.label)));
        }
        Ok(Mat2::new(v[0], v[1], v[2], v[3]))
    }

    /// `C̄ ← C̄ − μ E[H(C̄ S)] C̄`.
    pub fn step(&self, c: &Mat2, mu: f64) -> Result<Mat2> {
        Ok(c - mu * self.expected_h(c)? * c)
    }

    pub fn iterate(&self, c0: &Mat2, mu: f64, steps: usize) -> Result<Vec<Mat2>> {
        let mut out = Vec::with_capacity(steps + 1);
        let mut c = *c0;
        out.push(c);
        for _ in 0..steps {
            c = self.step(&c, mu)?;
            out.push(c);
        }
        Ok(out)
    }
}

pub fn meanfield_step(
    c: &Mat2,
    h: &HMatrix,
    model: &dyn SourceModel,
    mu: f64,
    engine: &ExpectationEngine,
) -> Result<Mat2> {
    MeanField::new(h, model, engine)?.step(c, mu)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Diagonal,
    AntiDiagonal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleEquilibrium {
    pub c1: f64,
    pub c2: f64,
    /// Diagonal-entry residuals at the root.
    pub residuals: (f64, f64),
    pub orientation: Orientation,
    /// Every distinct positive root reached from the start set.
    pub roots: Vec<(f64, f64)>,
}

impl ScaleEquilibrium {
    /// `diag(c1, c2)`, or `[[0, c2], [c1, 0]]` so that `C S = (c2 s2, c1 s1)`.
    pub fn matrix(&self) -> Mat2 {
        match self.orientation {
            Orientation::Diagonal => Mat2::new(self.c1, 0.0, 0.0, self.c2),
            Orientation::AntiDiagonal => Mat2::new(0.0, self.c2, self.c1, 0.0),
        }
    }

    /// Diagonal equilibrium at given scales, without solving.
    pub fn diagonal(c1: f64, c2: f64) -> Self {
        Self {
            c1,
            c2,
            residuals: (f64::NAN, f64::NAN),
            orientation: Orientation::Diagonal,
            roots: vec![(c1, c2)],
        }
    }
}

/// `[E h11(c1 s1, c2 s2), E h12, E h21, E h22]`.
pub fn equilibrium_residuals(
    h: &HMatrix,
    model: &dyn SourceModel,
    c1: f64,
    c2: f64,
    engine: &ExpectationEngine,
) -> Result<[Estimate; 4]> {
    let m = engine.prepare(model)?;
    Ok(m.expect(|s| h.entries(c1 * s.s1, c2 * s.s2)))
}

pub const SCALE_BRACKET: (f64, f64) = (0.05, 20.0);

struct Residual<'a> {
    h: &'a HMatrix,
    measure: &'a Measure,
    orientation: Orientation,
}

impl Residual<'_> {
    fn eval(&self, c1: f64, c2: f64) -> [f64; 2] {
        let h = self.h;
        match self.orientation {
            Orientation::Diagonal => self.measure.mean(|s| {
                let (z1, z2) = (c1 * s.s1, c2 * s.s2);
                [(h.h11)(z1, z2), (h.h22)(z1, z2)]
            }),
            Orientation::AntiDiagonal => self.measure.mean(|s| {
                let (z1, z2) = (c2 * s.s2, c1 * s.s1);
                [(h.h11)(z1, z2), (h.h22)(z1, z2)]
            }),
        }
    }

    fn newton(&self, start: (f64, f64), tol: f64) -> Option<(f64, f64)> {
        let (lo, hi) = SCALE_BRACKET;
        let (mut c1, mut c2) = start;
        let norm = |r: [f64; 2]| r[0].abs().max(r[1].abs());
        let mut r = self.eval(c1, c2);
        for _ in 0..100 {
            if !(r[0].is_finite() && r[1].is_finite()) {
                return None;
            }
            if norm(r) <= tol {
                return Some((c1, c2));
            }
            let (h1, h2) = (1e-7 * c1, 1e-7 * c2);
            let r1 = self.eval(c1 + h1, c2);
            let r2 = self.eval(c1, c2 + h2);
            let j = Mat2::new(
                (r1[0] - r[0]) / h1,
                (r2[0] - r[0]) / h2,
                (r1[1] - r[1]) / h1,
                (r2[1] - r[1]) / h2,
            );
            let step = j.try_inverse()? * nalgebra::Vector2::new(r[0], r[1]);
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let (n1, n2) = (c1 - lambda * step[0], c2 - lambda * step[1]);
                if n1 > 0.0 && n2 > 0.0 && n1 < 10.0 * hi && n2 < 10.0 * hi {
                    let nr = self.eval(n1, n2);
                    if norm(nr) < norm(r) {
                        c1 = n1;
                        c2 = n2;
                        r = nr;
                        accepted = true;
                        break;
                    }
                }
                lambda *= 0.5;
            }
            if !accepted {
                return None;
            }
        }
        (norm(r) <= tol && c1 >= lo && c2 >= lo).then_some((c1, c2))
    }

    /// Alternating bisection on each diagonal residual within the bracket.
    fn bisection(&self, start: (f64, f64), tol: f64) -> Result<(f64, f64)> {
        let (lo, hi) = SCALE_BRACKET;
        let mut c1;
        let mut c2 = start.1;
        let solve = |f: &dyn Fn(f64) -> f64| -> Result<f64> {
            let (mut a, mut b) = (lo, hi);
            let (mut fa, fb) = (f(a), f(b));
            if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() {
                return Err(BssError::NoRoot {
                    lo,
                    hi,
                    detail: format!("residual has no sign change ({fa:e}, {fb:e})"),
                });
            }
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                let fm = f(m);
                if fm == 0.0 || (b - a) < 1e-15 * m {
                    return Ok(m);
                }
                if fm.signum() == fa.signum() {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            Ok(0.5 * (a + b))
        };
        for _ in 0..500 {
            c1 = solve(&|x| self.eval(x, c2)[0])?;
            c2 = solve(&|x| self.eval(c1, x)[1])?;
            let r = self.eval(c1, c2);
            if r[0].abs().max(r[1].abs()) <= tol {
                return Ok((c1, c2));
            }
        }
        Err(BssError::NoRoot {
            lo,
            hi,
            detail: "alternating bisection did not converge".into(),
        })
    }
}

/// Positive `(c1, c2)` zeroing the diagonal-entry expectations, for a
/// diagonal or anti-diagonal non-mixing limit.
///
/// Damped Newton (finite-difference Jacobian) from several starts; among
/// the distinct roots found, the one closest to `(1, 1)` is returned. Falls
/// back to alternating bisection on `[0.05, 20]`.
pub fn solve_scale_equilibrium(
    h: &HMatrix,
    model: &dyn SourceModel,
    engine: &ExpectationEngine,
    orientation: Orientation,
    tol: f64,
) -> Result<ScaleEquilibrium> {
    let measure = engine.prepare(model)?;
    solve_on_measure(h, &measure, model.second_moments(), orientation, tol)
}

pub(crate) fn solve_on_measure(
    h: &HMatrix,
    measure: &Measure,
    moments: (f64, f64),
    orientation: Orientation,
    tol: f64,
) -> Result<ScaleEquilibrium> {
    let res = Residual {
        h,
        measure,
        orientation,
    };
    let (m1, m2) = match orientation {
        Orientation::Diagonal => moments,
        Orientation::AntiDiagonal => (moments.1, moments.0),
    };
    // whitening guess: c_i ≈ 1 / rms of the source it multiplies
    let guess = match orientation {
        Orientation::Diagonal => (1.0 / m1.sqrt(), 1.0 / m2.sqrt()),
        Orientation::AntiDiagonal => (1.0 / m2.sqrt(), 1.0 / m1.sqrt()),
    };
    let mut starts = vec![(1.0, 1.0), guess];
    for f in [0.5, 2.0] {
        starts.push((guess.0 * f, guess.1 * f));
    }
    let mut roots: Vec<(f64, f64)> = Vec::new();
    for s in starts {
        if !(s.0.is_finite() && s.1.is_finite()) {
            continue;
        }
        if let Some(r) = res.newton(s, tol) {
            if !roots
                .iter()
                .any(|q| (q.0 - r.0).abs() <= 1e-6 * r.0 && (q.1 - r.1).abs() <= 1e-6 * r.1)
            {
                roots.push(r);
            }
        }
    }
    if roots.is_empty() {
        roots.push(res.bisection(guess, tol)?);
    }
    let dist = |r: &(f64, f64)| (r.0 - 1.0).powi(2) + (r.1 - 1.0).powi(2);
    let best = *roots
        .iter()
        .min_by(|a, b| dist(a).total_cmp(&dist(b)))
        .expect("at least one root");
    let r = res.eval(best.0, best.1);
    Ok(ScaleEquilibrium {
        c1: best.0,
        c2: best.1,
        residuals: (r[0], r[1]),
        orientation,
        roots,
    })
}
