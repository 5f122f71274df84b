//! One-dimensional Gauss rules (Golub–Welsch) and weighted point sets.
//!
//! Every rule here is a probability rule: the weights already include the
//! density and sum to one, so an expectation is `Σ w·φ(x)`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::sources::SamplePair;

/// Nodes and weights of a one-dimensional probability rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule1D {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule1D {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Affine push-forward `x ↦ shift + scale·x`.
    pub fn map(mut self, shift: f64, scale: f64) -> Self {
        for x in &mut self.nodes {
            *x = shift + scale * *x;
        }
        self
    }

    /// Concatenate rules with mixture weights.
    pub fn mixture(parts: Vec<(f64, Rule1D)>) -> Self {
        let mut out = Rule1D {
            nodes: Vec::new(),
            weights: Vec::new(),
        };
        for (p, r) in parts {
            out.nodes.extend(r.nodes);
            out.weights.extend(r.weights.into_iter().map(|w| p * w));
        }
        out
    }
}

/// Golub–Welsch: nodes are eigenvalues of the Jacobi matrix, weights the
/// squared first components of the normalized eigenvectors (scaled by `mu0`).
fn golub_welsch(diag: &[f64], offdiag: &[f64], mu0: f64) -> Rule1D {
    let n = diag.len();
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        jac[(i, i)] = diag[i];
        if i + 1 < n {
            jac[(i, i + 1)] = offdiag[i];
            jac[(i + 1, i)] = offdiag[i];
        }
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Rule1D {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// Gauss–Legendre rule for the uniform probability measure on `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Rule1D {
    assert!(n >= 1);
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        })
        .collect();
    let r = golub_welsch(&diag, &off, 1.0);
    // reference interval [-1, 1] with total weight 1 → [a, b]
    r.map(0.5 * (a + b), 0.5 * (b - a))
}

/// Gauss–Hermite rule for the standard normal measure.
pub fn gauss_hermite(n: usize) -> Rule1D {
    assert!(n >= 1);
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n).map(|k| (k as f64).sqrt()).collect();
    golub_welsch(&diag, &off, 1.0)
}

/// Gauss rule for the half-normal law `√(2/π) e^{−r²/2}` on `[0, ∞)`.
///
/// The recurrence is obtained by Lanczos iteration (with full
/// reorthogonalization) on a fine discretization of the measure. Mirrored
/// about zero it gives a normal rule that is also exact for polynomials in
/// `|x|`.
pub fn half_normal(n: usize) -> Rule1D {
    assert!(n >= 1);
    let fine = composite_weighted(
        &(0..48).map(|k| (0.375 * k as f64, 0.375 * (k + 1) as f64, 48)).collect::<Vec<_>>(),
        |r| (2.0 / std::f64::consts::PI).sqrt() * (-0.5 * r * r).exp(),
    );
    let (x, w) = (&fine.nodes, &fine.weights);
    let total: f64 = w.iter().sum();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).zip(w).map(|((p, q), wt)| p * q * wt).sum::<f64>();
    let mut basis: Vec<Vec<f64>> = vec![vec![1.0 / total.sqrt(); x.len()]];
    let mut diag = Vec::with_capacity(n);
    let mut off = Vec::with_capacity(n);
    for k in 0..n {
        let q = &basis[k];
        let xq: Vec<f64> = q.iter().zip(x).map(|(a, b)| a * b).collect();
        diag.push(dot(&xq, q));
        if k + 1 == n {
            break;
        }
        let mut r = xq;
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&r, b);
                for (ri, bi) in r.iter_mut().zip(b) {
                    *ri -= c * bi;
                }
            }
        }
        let norm = dot(&r, &r).sqrt();
        off.push(norm);
        basis.push(r.into_iter().map(|v| v / norm).collect());
    }
    golub_welsch(&diag, &off, 1.0)
}

/// Generalized Gauss–Laguerre rule for the Gamma(alpha + 1, 1) measure on `[0, ∞)`.
pub fn gauss_laguerre(n: usize, alpha: f64) -> Rule1D {
    assert!(n >= 1 && alpha > -1.0);
    let diag: Vec<f64> = (0..n).map(|k| 2.0 * k as f64 + alpha + 1.0).collect();
    let off: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            (k * (k + alpha)).sqrt()
        })
        .collect();
    golub_welsch(&diag, &off, 1.0)
}

/// Composite Gauss–Legendre over consecutive panels, weighted by a density.
/// The resulting weights are `density(x)·dx` and are not renormalized.
pub fn composite_weighted(
    panels: &[(f64, f64, usize)],
    density: impl Fn(f64) -> f64,
) -> Rule1D {
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for &(a, b, n) in panels {
        let r = gauss_legendre(n, a, b);
        for (x, w) in r.nodes.into_iter().zip(r.weights) {
            nodes.push(x);
            weights.push(w * (b - a) * density(x));
        }
    }
    Rule1D { nodes, weights }
}

/// Weighted point set approximating a bivariate source law.
#[derive(Debug, Clone, Default)]
pub struct Rule2D {
    pub points: Vec<SamplePair>,
    pub weights: Vec<f64>,
}

impl Rule2D {
    pub fn tensor(r1: &Rule1D, r2: &Rule1D) -> Self {
        let mut points = Vec::with_capacity(r1.len() * r2.len());
        let mut weights = Vec::with_capacity(r1.len() * r2.len());
        for (&x, &wx) in r1.nodes.iter().zip(&r1.weights) {
            for (&y, &wy) in r2.nodes.iter().zip(&r2.weights) {
                points.push(SamplePair::new(x, y));
                weights.push(wx * wy);
            }
        }
        Rule2D { points, weights }
    }

    /// Polar product: radius rule × equispaced angles (trapezoid, exact for
    /// trigonometric polynomials of degree below `n_theta`), mapped by
    /// `(ρ, θ) ↦ (ρ cos θ / sx, ρ sin θ / sy)`.
    pub fn polar(radial: &Rule1D, n_theta: usize, sx: f64, sy: f64) -> Self {
        let dtheta = 2.0 * std::f64::consts::PI / n_theta as f64;
        let mut points = Vec::with_capacity(radial.len() * n_theta);
        let mut weights = Vec::with_capacity(radial.len() * n_theta);
        for (&rho, &w) in radial.nodes.iter().zip(&radial.weights) {
            for k in 0..n_theta {
                // half-step offset keeps nodes off the coordinate axes
                let th = (k as f64 + 0.5) * dtheta;
                points.push(SamplePair::new(rho * th.cos() / sx, rho * th.sin() / sy));
                weights.push(w / n_theta as f64);
            }
        }
        Rule2D { points, weights }
    }

    pub fn mixture(parts: Vec<(f64, Rule2D)>) -> Self {
        let mut out = Rule2D::default();
        for (p, r) in parts {
            out.points.extend(r.points);
            out.weights.extend(r.weights.into_iter().map(|w| p * w));
        }
        out
    }

    pub fn map(mut self, f: impl Fn(SamplePair) -> SamplePair) -> Self {
        for p in &mut self.points {
            *p = f(*p);
        }
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let r = gauss_legendre(8, -1.0, 1.0);
        assert!((r.expect(|x| x * x) - 1.0 / 3.0).abs() < 1e-14);
        assert!((r.expect(|x| x.powi(14)) - 1.0 / 15.0).abs() < 1e-14);
        let r = gauss_legendre(5, 0.0, 2.0);
        assert!((r.expect(|x| x) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn half_normal_moments() {
        let r = half_normal(20);
        let m1 = (2.0 / std::f64::consts::PI).sqrt();
        assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((r.expect(|x| x) - m1).abs() < 1e-12);
        assert!((r.expect(|x| x * x) - 1.0).abs() < 1e-12);
        assert!((r.expect(|x| x.powi(3)) - 2.0 * m1).abs() < 1e-11);
        assert!((r.expect(|x| x.powi(8)) - 105.0).abs() < 1e-9);
    }

    #[test]
    fn hermite_moments() {
        let r = gauss_hermite(64);
        assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-13);
        assert!((r.expect(|x| x * x) - 1.0).abs() < 1e-12);
        assert!((r.expect(|x| x.powi(4)) - 3.0).abs() < 1e-11);
        assert!((r.expect(|x| x.powi(8)) - 105.0).abs() < 1e-9);
        assert!(r.expect(|x| x.powi(3)).abs() < 1e-12);
    }

    #[test]
    fn laguerre_moments() {
        let r = gauss_laguerre(32, 0.0);
        assert!((r.expect(|x| x) - 1.0).abs() < 1e-12);
        assert!((r.expect(|x| x * x) - 2.0).abs() < 1e-11);
        let r = gauss_laguerre(32, 1.0);
        // Gamma(2,1): E x = 2, E x² = 6
        assert!((r.expect(|x| x) - 2.0).abs() < 1e-11);
        assert!((r.expect(|x| x * x) - 6.0).abs() < 1e-10);
    }

    #[test]
    fn polar_rule_is_exact_for_trig_moments() {
        let radial = gauss_legendre(16, 0.0, 1.0);
        let r = Rule2D::polar(&radial, 32, 1.0, 1.0);
        // uniform radius, uniform angle: E[s1² s2²] = E[r⁴] E[cos² sin²] = (1/5)(1/8)
        let v: f64 = r
            .points
            .iter()
            .zip(&r.weights)
            .map(|(p, w)| w * p.s1 * p.s1 * p.s2 * p.s2)
            .sum();
        assert!((v - 1.0 / 40.0).abs() < 1e-14);
    }
}
