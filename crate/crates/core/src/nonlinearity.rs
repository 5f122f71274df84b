//! The matrix nonlinearity `H(Z)` driving the separating recursion.
//!
//! Diagonal entries must be even in each argument and anti-diagonal entries
//! odd in each argument; together with a quadrantally symmetric source law
//! this makes every non-mixing matrix an equilibrium candidate.

use std::fmt;
use std::sync::Arc;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{BssError, Result};
use crate::sources::{capability, SamplePair, SharedModel};

pub type BivariateFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type UnivariateFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Even,
    Odd,
}

/// Parity in `(z1, z2)` of each entry, row-major `[h11, h12, h21, h22]`.
pub const STANDARD_PARITY: [(Parity, Parity); 4] = [
    (Parity::Even, Parity::Even),
    (Parity::Odd, Parity::Odd),
    (Parity::Odd, Parity::Odd),
    (Parity::Even, Parity::Even),
];

#[derive(Clone)]
pub struct HMatrix {
    pub h11: BivariateFn,
    pub h12: BivariateFn,
    pub h21: BivariateFn,
    pub h22: BivariateFn,
    pub declared_parity: [(Parity, Parity); 4],
    pub label: String,
}

impl fmt::Debug for HMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HMatrix").field("label", &self.label).finish()
    }
}

impl HMatrix {
    pub fn new(
        label: impl Into<String>,
        h11: BivariateFn,
        h12: BivariateFn,
        h21: BivariateFn,
        h22: BivariateFn,
    ) -> Self {
        Self {
            h11,
            h12,
            h21,
            h22,
            declared_parity: STANDARD_PARITY,
            label: label.into(),
        }
    }

    /// Row-major `[h11, h12, h21, h22]` without finiteness checks.
    #[inline]
    pub fn entries(&self, z1: f64, z2: f64) -> [f64; 4] {
        [
            (self.h11)(z1, z2),
            (self.h12)(z1, z2),
            (self.h21)(z1, z2),
            (self.h22)(z1, z2),
        ]
    }

    pub fn evaluate(&self, z1: f64, z2: f64) -> Result<Matrix2<f64>> {
        let [a, b, c, d] = self.entries(z1, z2);
        if [a, b, c, d].iter().all(|v| v.is_finite()) {
            Ok(Matrix2::new(a, b, c, d))
        } else {
            Err(BssError::NonFinite(format!(
                "H `{}` at ({z1}, {z2})",
                self.label
            )))
        }
    }

    fn entry(&self, k: usize) -> &BivariateFn {
        match k {
            0 => &self.h11,
            1 => &self.h12,
            2 => &self.h21,
            _ => &self.h22,
        }
    }
}

/// `G(Z) = [g1(z1), g2(z2)]` with both components odd.
#[derive(Clone)]
pub struct OddFunctionPair {
    pub g1: UnivariateFn,
    pub g2: UnivariateFn,
    pub label: String,
}

impl fmt::Debug for OddFunctionPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OddFunctionPair").field("label", &self.label).finish()
    }
}

impl OddFunctionPair {
    pub fn same(label: impl Into<String>, g: UnivariateFn) -> Self {
        Self {
            g1: g.clone(),
            g2: g,
            label: label.into(),
        }
    }

    pub fn cubic() -> Self {
        Self::same("cubic", Arc::new(|z: f64| z * z * z))
    }

    pub fn identity() -> Self {
        Self::same("identity", Arc::new(|z: f64| z))
    }

    pub fn tanh() -> Self {
        Self::same("tanh", Arc::new(f64::tanh))
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "cubic" => Ok(Self::cubic()),
            "identity" | "linear" => Ok(Self::identity()),
            "tanh" => Ok(Self::tanh()),
            other => Err(BssError::UnknownName {
                kind: "odd function",
                name: other.into(),
            }),
        }
    }

    /// Largest `|g(−z) + g(z)|` over a 41-point grid on `[−w, w]`.
    pub fn oddness_violation(&self, w: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..=40 {
            let z = -w + 2.0 * w * k as f64 / 40.0;
            for g in [&self.g1, &self.g2] {
                worst = worst.max((g(-z) + g(z)).abs());
            }
        }
        worst
    }
}

/// `H(Z) = [Z Zᵀ − I] + [Z Gᵀ(Z) − G(Z) Zᵀ]`.
pub fn make_classical(g: OddFunctionPair) -> Result<HMatrix> {
    let v = g.oddness_violation(DEFAULT_PARITY_HALF_WIDTH);
    if v > 1e-12 {
        return Err(BssError::InvalidParameter(format!(
            "g `{}` is not odd (violation {v:e})",
            g.label
        )));
    }
    let (g1, g2) = (g.g1.clone(), g.g2.clone());
    let (g1b, g2b) = (g.g1.clone(), g.g2.clone());
    Ok(HMatrix::new(
        format!("classical({})", g.label),
        Arc::new(|z1, _| z1 * z1 - 1.0),
        Arc::new(move |z1, z2| z1 * z2 + z1 * g2(z2) - g1(z1) * z2),
        Arc::new(move |z1, z2| z1 * z2 + z2 * g1b(z1) - g2b(z2) * z1),
        Arc::new(|_, z2| z2 * z2 - 1.0),
    ))
}

/// The classical form with `g(z) = z³`.
pub fn make_classical_cubic() -> HMatrix {
    let mut h = make_classical(OddFunctionPair::cubic()).expect("cubic is odd");
    h.label = "classical_cubic".into();
    h
}

/// Non-whitening nonlinearity `[[|z1|−1, z1 z2² sgn z2], [z2 z1² sgn z1, |z2|−1]]`.
pub fn make_absvalue() -> HMatrix {
    HMatrix::new(
        "absvalue",
        Arc::new(|z1: f64, _| z1.abs() - 1.0),
        Arc::new(|z1: f64, z2: f64| z1 * z2 * z2.abs()),
        Arc::new(|z1: f64, z2: f64| z2 * z1 * z1.abs()),
        Arc::new(|_, z2: f64| z2.abs() - 1.0),
    )
}

/// Diagonal convention for the score-built nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreOffset {
    /// `h_ii = −z_i f_{s_i}/f`. Has `E[h_ii(s)] = 1`, so unit scales are not
    /// an equilibrium.
    Raw,
    /// `h_ii = −z_i f_{s_i}/f − 1`, which vanishes in expectation at unit scales.
    Centered,
}

/// Nonlinearity built from the source law's own score:
/// `h11 = −z1 f_{s1}/f`, `h22 = −z2 f_{s2}/f`, `h12 = −z2 f_{s1}/f`,
/// `h21 = −z1 f_{s2}/f`, all evaluated at `(z1, z2)`.
pub fn make_score_based(model: SharedModel, offset: ScoreOffset) -> Result<HMatrix> {
    if !model.has_gradient() {
        return Err(capability(model.as_ref(), "analytic pdf gradient"));
    }
    let shift = match offset {
        ScoreOffset::Raw => 0.0,
        ScoreOffset::Centered => 1.0,
    };
    let score = move |m: &SharedModel, z1: f64, z2: f64| {
        m.score(SamplePair::new(z1, z2)).unwrap_or((0.0, 0.0))
    };
    let (m11, m12, m21, m22) = (model.clone(), model.clone(), model.clone(), model.clone());
    Ok(HMatrix::new(
        format!("score_based({}, {offset:?})", model.label()),
        Arc::new(move |z1, z2| -z1 * score(&m11, z1, z2).0 - shift),
        Arc::new(move |z1, z2| -z2 * score(&m12, z1, z2).0),
        Arc::new(move |z1, z2| -z1 * score(&m21, z1, z2).1),
        Arc::new(move |z1, z2| -z2 * score(&m22, z1, z2).1 - shift),
    ))
}

pub const DEFAULT_PARITY_HALF_WIDTH: f64 = 4.0;
pub const DEFAULT_PARITY_TOL: f64 = 1e-9;
pub const PARITY_GRID: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParityCheck {
    pub valid: bool,
    pub worst_violation: f64,
    pub worst_at: (f64, f64),
}

fn gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs()
    }
}

/// Largest violation of the eight parity identities at one point.
pub fn parity_violation_at(h: &HMatrix, z1: f64, z2: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (k, &(p1, p2)) in h.declared_parity.iter().enumerate() {
        let f = h.entry(k);
        let v = f(z1, z2);
        let sign = |p: Parity| if p == Parity::Even { 1.0 } else { -1.0 };
        worst = worst
            .max(gap(f(-z1, z2), sign(p1) * v))
            .max(gap(f(z1, -z2), sign(p2) * v));
    }
    worst
}

/// Checks the parity identities on a 21×21 grid over `[−w, w]²`.
pub fn validate_parities(h: &HMatrix, grid_half_width: f64, tol: f64) -> ParityCheck {
    let w = grid_half_width;
    let mut out = ParityCheck {
        valid: true,
        worst_violation: 0.0,
        worst_at: (0.0, 0.0),
    };
    for i in 0..PARITY_GRID {
        for j in 0..PARITY_GRID {
            let z1 = -w + 2.0 * w * i as f64 / (PARITY_GRID - 1) as f64;
            let z2 = -w + 2.0 * w * j as f64 / (PARITY_GRID - 1) as f64;
            let v = parity_violation_at(h, z1, z2);
            if v > out.worst_violation || v.is_nan() {
                out.worst_violation = v;
                out.worst_at = (z1, z2);
            }
        }
    }
    out.valid = out.worst_violation <= tol;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sources::{make_gaussian_pair, make_gaussian_scale_mixture};

    #[test]
    fn classical_cubic_values() {
        let h = make_classical_cubic();
        assert_eq!(h.evaluate(1.0, 1.0).unwrap(), Matrix2::new(0.0, 1.0, 1.0, 0.0));
        assert_eq!(h.evaluate(0.0, 0.0).unwrap(), Matrix2::new(-1.0, 0.0, 0.0, -1.0));
        // §V display: h12 = z1z2 + z1z2³ − z2z1³
        let (z1, z2) = (0.7, -1.9);
        let m = h.evaluate(z1, z2).unwrap();
        let want = z1 * z2 + z1 * z2.powi(3) - z2 * z1.powi(3);
        assert!((m[(0, 1)] - want).abs() < 1e-14);
    }

    #[test]
    fn classical_identity_reduces_to_whitening_cross_term() {
        let h = make_classical(OddFunctionPair::identity()).unwrap();
        for &(a, b) in &[(0.3, 2.0), (-1.5, 0.25)] {
            let m = h.evaluate(a, b).unwrap();
            assert!((m[(0, 1)] - a * b).abs() < 1e-15);
            assert!((m[(1, 0)] - a * b).abs() < 1e-15);
        }
    }

    #[test]
    fn classical_diagonal_ignores_g_and_cross_part_is_antisymmetric() {
        let a = make_classical(OddFunctionPair::cubic()).unwrap();
        let b = make_classical(OddFunctionPair::tanh()).unwrap();
        for &(z1, z2) in &[(0.4, -2.2), (3.0, 1.0)] {
            let (ma, mb) = (a.evaluate(z1, z2).unwrap(), b.evaluate(z1, z2).unwrap());
            assert_eq!(ma[(0, 0)], mb[(0, 0)]);
            assert_eq!(ma[(1, 1)], mb[(1, 1)]);
            // subtract the symmetric whitening part: remainder is antisymmetric
            let w = z1 * z2;
            assert!(((ma[(0, 1)] - w) + (ma[(1, 0)] - w)).abs() < 1e-12);
        }
    }

    #[test]
    fn even_g_is_rejected() {
        let g = OddFunctionPair::same("square", Arc::new(|z: f64| z * z));
        assert!(make_classical(g).is_err());
    }

    #[test]
    fn absvalue_values() {
        let h = make_absvalue();
        assert_eq!(h.evaluate(1.0, 2.0).unwrap(), Matrix2::new(0.0, 4.0, 2.0, 1.0));
        assert_eq!(h.evaluate(-1.0, 2.0).unwrap(), Matrix2::new(0.0, -4.0, -2.0, 1.0));
    }

    #[test]
    fn shipped_families_pass_parity_checks() {
        for h in [make_classical_cubic(), make_absvalue()] {
            let c = validate_parities(&h, DEFAULT_PARITY_HALF_WIDTH, 1e-12);
            assert!(c.valid, "{}: {c:?}", h.label);
        }
        let m: SharedModel = Arc::new(make_gaussian_scale_mixture());
        let h = make_score_based(m, ScoreOffset::Centered).unwrap();
        assert!(validate_parities(&h, DEFAULT_PARITY_HALF_WIDTH, 1e-12).valid);
    }

    #[test]
    fn odd_diagonal_fails_parity() {
        let mut h = make_classical_cubic();
        h.h11 = Arc::new(|z1, _| z1);
        assert_eq!(parity_violation_at(&h, 1.0, 1.0), 2.0);
        let c = validate_parities(&h, DEFAULT_PARITY_HALF_WIDTH, DEFAULT_PARITY_TOL);
        assert!(!c.valid);
    }

    #[test]
    fn score_based_on_unit_gaussian_is_quadratic() {
        let m: SharedModel = Arc::new(make_gaussian_pair());
        let h = make_score_based(m, ScoreOffset::Raw).unwrap();
        let (z1, z2) = (0.8, -1.7);
        let e = h.evaluate(z1, z2).unwrap();
        let want = Matrix2::new(z1 * z1, z1 * z2, z1 * z2, z2 * z2);
        assert!((e - want).abs().max() < 1e-14);
    }

    #[test]
    fn score_based_requires_gradient() {
        let m: SharedModel = Arc::new(crate::sources::make_polar_dependent(
            crate::sources::PolarModelConfig { d: 1.0 },
        ));
        assert!(matches!(
            make_score_based(m, ScoreOffset::Centered),
            Err(BssError::Capability { .. })
        ));
    }
}
