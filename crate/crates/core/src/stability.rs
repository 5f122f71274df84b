//! Local stability of non-mixing equilibria: the matrices `F` and `G`, the
//! Routh–Hurwitz test, a finite-difference check of the linearized
//! mean-field map, Theorem-1 style κ conditions and the separability
//! classifier built on the score-function nonlinearity.

use std::fmt::Write as _;

use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use serde::Serialize;

use crate::adaptive::Mat2;
use crate::error::{BssError, Result};
use crate::meanfield::{
    solve_on_measure, ExpectationEngine, Measure, MeanField, Orientation, ScaleEquilibrium,
};
use crate::nonlinearity::{HMatrix, OddFunctionPair};
use crate::sources::{capability, SamplePair, SourceModel};

/// Relative size below which an eigenvalue counts as zero.
pub const DEFAULT_TOL_EIG: f64 = 1e-3;
pub const DEFAULT_TOL_FIT: f64 = 1e-6;
/// Boundary terms must stay below this fraction of the integrand peak.
pub const BOUNDARY_DECAY: f64 = 1e-8;
pub const DEFAULT_FD_STEP: f64 = 1e-4;
const EQUILIBRIUM_TOL: f64 = 1e-11;
const RELATIVE_ZERO: f64 = 1e-9;

/// Strict 2×2 Routh–Hurwitz test: `tr M < 0` and `det M > 0`.
pub fn routh_hurwitz(m: &Mat2) -> bool {
    m.trace() < 0.0 && m.determinant() > 0.0
}

/// Routh–Hurwitz with trace and determinant required to clear `tol`
/// relative to the matrix scale, so numerically zero values count as zero.
pub fn routh_hurwitz_tol(m: &Mat2, tol: f64) -> bool {
    let scale = m.abs().max();
    m.trace() < -tol * scale && m.determinant() > tol * scale * scale
}

/// Eigenvalues of a real 2×2 matrix as `(re, im)` pairs.
pub fn eigenvalues2(m: &Mat2) -> [(f64, f64); 2] {
    let half = 0.5 * m.trace();
    let disc = half * half - m.determinant();
    if disc >= 0.0 {
        let r = disc.sqrt();
        [(half + r, 0.0), (half - r, 0.0)]
    } else {
        let r = (-disc).sqrt();
        [(half, r), (half, -r)]
    }
}

fn require_gradient(model: &dyn SourceModel) -> Result<()> {
    if !model.has_pdf() {
        return Err(capability(model, "analytic pdf"));
    }
    if !model.has_gradient() {
        return Err(capability(model, "analytic pdf gradient"));
    }
    Ok(())
}

/// Matrix value together with its per-entry engine error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatrixEstimate {
    pub value: Mat2,
    pub error: Mat2,
}

/// Evaluates `F` and `G` on a prepared measure. An anti-diagonal
/// equilibrium is handled by exchanging the roles of the two sources.
fn fg_on(
    h: &HMatrix,
    model: &dyn SourceModel,
    measure: &Measure,
    eq: &ScaleEquilibrium,
) -> (MatrixEstimate, MatrixEstimate) {
    let swap = eq.orientation == Orientation::AntiDiagonal;
    let (a, b) = if swap { (eq.c2, eq.c1) } else { (eq.c1, eq.c2) };
    let est = measure.expect(|s| {
        let (p1, p2) = model.score(s).unwrap_or((0.0, 0.0));
        let (x, y, q1, q2) = if swap {
            (s.s2, s.s1, p2, p1)
        } else {
            (s.s1, s.s2, p1, p2)
        };
        let [h11, h12, h21, h22] = h.entries(a * x, b * y);
        let (u1, u2) = (x * q1, y * q2);
        let (v1, v2) = (y * q1, x * q2);
        [
            h11 * u1,
            h11 * u2,
            h22 * u1,
            h22 * u2,
            h12 * v1,
            h12 * v2,
            h21 * v1,
            h21 * v2,
        ]
    });
    let pack = |k: usize| MatrixEstimate {
        value: Mat2::new(est[k].value, est[k + 1].value, est[k + 2].value, est[k + 3].value),
        error: Mat2::new(est[k].error, est[k + 1].error, est[k + 2].error, est[k + 3].error),
    };
    (pack(0), pack(4))
}

/// `F = E[[h11; h22](c1 s1, c2 s2) · [s1 f_{s1}/f, s2 f_{s2}/f]]`.
pub fn compute_f(
    h: &HMatrix,
    model: &dyn SourceModel,
    eq: &ScaleEquilibrium,
    engine: &ExpectationEngine,
) -> Result<Mat2> {
    Ok(compute_fg(h, model, eq, engine)?.0.value)
}

/// `G = E[[h12; h21](c1 s1, c2 s2) · [s2 f_{s1}/f, s1 f_{s2}/f]]`.
pub fn compute_g(
    h: &HMatrix,
    model: &dyn SourceModel,
    eq: &ScaleEquilibrium,
    engine: &ExpectationEngine,
) -> Result<Mat2> {
    Ok(compute_fg(h, model, eq, engine)?.1.value)
}

/// `F` and `G` with engine errors, sharing one pass over the measure.
pub fn compute_fg(
    h: &HMatrix,
    model: &dyn SourceModel,
    eq: &ScaleEquilibrium,
    engine: &ExpectationEngine,
) -> Result<(MatrixEstimate, MatrixEstimate)> {
    require_gradient(model)?;
    let measure = engine.prepare(model)?;
    Ok(fg_on(h, model, &measure, eq))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub h_label: String,
    pub model_label: String,
    pub equilibrium: ScaleEquilibrium,
    pub f: Mat2,
    pub g: Mat2,
    pub f_error: Mat2,
    pub g_error: Mat2,
    pub trace_f: f64,
    pub det_f: f64,
    pub trace_g: f64,
    pub det_g: f64,
    pub eigenvalues_f: [(f64, f64); 2],
    pub eigenvalues_g: [(f64, f64); 2],
    pub stable_f: bool,
    pub stable_g: bool,
    pub stable: bool,
    /// Relative tolerance used to decide whether trace and determinant
    /// differ from zero.
    pub zero_tolerance: f64,
    /// Largest boundary term relative to the integrand peak.
    pub boundary_ratio: f64,
    /// Whether the integration-by-parts boundary terms decay.
    pub boundary_decay_ok: bool,
}

fn boundary_ratio(h: &HMatrix, model: &dyn SourceModel, measure: &Measure, eq: &ScaleEquilibrium) -> f64 {
    let swap = eq.orientation == Orientation::AntiDiagonal;
    let (a, b) = if swap { (eq.c2, eq.c1) } else { (eq.c1, eq.c2) };
    let term = |s: SamplePair| {
        let Some(f) = model.pdf(s) else { return 0.0 };
        let (x, y) = if swap { (s.s2, s.s1) } else { (s.s1, s.s2) };
        let e = h.entries(a * x, b * y);
        let m = e.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let r = x.abs().max(y.abs());
        let t = m * r * f;
        if t.is_finite() {
            t
        } else {
            f64::INFINITY
        }
    };
    let peak = measure
        .rule()
        .points
        .iter()
        .map(|s| term(*s))
        .fold(0.0_f64, f64::max);
    let tail = model.tail_probe().into_iter().map(term).fold(0.0_f64, f64::max);
    if peak > 0.0 {
        tail / peak
    } else {
        0.0
    }
}

impl StabilityReport {
    fn build(
        h: &HMatrix,
        model: &dyn SourceModel,
        measure: &Measure,
        equilibrium: ScaleEquilibrium,
    ) -> Self {
        let (f, g) = fg_on(h, model, measure, &equilibrium);
        let rel_err = |m: &MatrixEstimate| {
            let scale = m.value.abs().max();
            if scale > 0.0 {
                m.error.abs().max() / scale
            } else {
                0.0
            }
        };
        let zero_tolerance = if measure.is_monte_carlo() {
            (3.0 * rel_err(&f).max(rel_err(&g))).max(RELATIVE_ZERO)
        } else {
            RELATIVE_ZERO
        };
        let stable_f = routh_hurwitz_tol(&f.value, zero_tolerance);
        let stable_g = routh_hurwitz_tol(&g.value, zero_tolerance);
        let boundary_ratio = boundary_ratio(h, model, measure, &equilibrium);
        Self {
            h_label: h.label.clone(),
            model_label: model.label(),
            f: f.value,
            g: g.value,
            f_error: f.error,
            g_error: g.error,
            trace_f: f.value.trace(),
            det_f: f.value.determinant(),
            trace_g: g.value.trace(),
            det_g: g.value.determinant(),
            eigenvalues_f: eigenvalues2(&f.value),
            eigenvalues_g: eigenvalues2(&g.value),
            stable_f,
            stable_g,
            stable: stable_f && stable_g,
            zero_tolerance,
            boundary_ratio,
            boundary_decay_ok: boundary_ratio <= BOUNDARY_DECAY,
            equilibrium,
        }
    }

    /// `key: value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let m = |x: &Mat2| format!("[[{:.9e}, {:.9e}], [{:.9e}, {:.9e}]]", x[(0, 0)], x[(0, 1)], x[(1, 0)], x[(1, 1)]);
        let e = |v: &[(f64, f64); 2]| format!("{:.9e}{:+.9e}i, {:.9e}{:+.9e}i", v[0].0, v[0].1, v[1].0, v[1].1);
        let _ = writeln!(s, "h: {}", self.h_label);
        let _ = writeln!(s, "model: {}", self.model_label);
        let _ = writeln!(s, "orientation: {:?}", self.equilibrium.orientation);
        let _ = writeln!(s, "c1: {:.12}", self.equilibrium.c1);
        let _ = writeln!(s, "c2: {:.12}", self.equilibrium.c2);
        let _ = writeln!(s, "F: {}", m(&self.f));
        let _ = writeln!(s, "G: {}", m(&self.g));
        let _ = writeln!(s, "trace_F: {:.9e}", self.trace_f);
        let _ = writeln!(s, "det_F: {:.9e}", self.det_f);
        let _ = writeln!(s, "trace_G: {:.9e}", self.trace_g);
        let _ = writeln!(s, "det_G: {:.9e}", self.det_g);
        let _ = writeln!(s, "eigenvalues_F: {}", e(&self.eigenvalues_f));
        let _ = writeln!(s, "eigenvalues_G: {}", e(&self.eigenvalues_g));
        let _ = writeln!(s, "stable_F: {}", self.stable_f);
        let _ = writeln!(s, "stable_G: {}", self.stable_g);
        let _ = writeln!(s, "stable: {}", self.stable);
        let _ = writeln!(s, "boundary_ratio: {:.3e}", self.boundary_ratio);
        let _ = writeln!(s, "boundary_decay_ok: {}", self.boundary_decay_ok);
        s
    }

    pub const CSV_HEADER: &'static str = "h,model,c1,c2,f11,f12,f21,f22,g11,g12,g21,g22,trace_f,det_f,trace_g,det_g,stable,boundary_decay_ok";

    pub fn csv_row(&self) -> String {
        let mut cols = vec![
            csv_field(&self.h_label),
            csv_field(&self.model_label),
            format!("{:.16e}", self.equilibrium.c1),
            format!("{:.16e}", self.equilibrium.c2),
        ];
        for m in [&self.f, &self.g] {
            for v in [m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]] {
                cols.push(format!("{v:.16e}"));
            }
        }
        for v in [self.trace_f, self.det_f, self.trace_g, self.det_g] {
            cols.push(format!("{v:.16e}"));
        }
        cols.push(self.stable.to_string());
        cols.push(self.boundary_decay_ok.to_string());
        cols.join(",")
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Solves the diagonal scale equilibrium, then evaluates `F`, `G` and the
/// Routh–Hurwitz verdict on both.
pub fn stability_report(
    h: &HMatrix,
    model: &dyn SourceModel,
    engine: &ExpectationEngine,
) -> Result<StabilityReport> {
    stability_report_at(h, model, engine, Orientation::Diagonal)
}

pub fn stability_report_at(
    h: &HMatrix,
    model: &dyn SourceModel,
    engine: &ExpectationEngine,
    orientation: Orientation,
) -> Result<StabilityReport> {
    require_gradient(model)?;
    let measure = engine.prepare(model)?;
    let eq = solve_on_measure(h, &measure, model.second_moments(), orientation, EQUILIBRIUM_TOL)?;
    Ok(StabilityReport::build(h, model, &measure, eq))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KappaReport {
    pub kappa1: f64,
    pub kappa2: f64,
    /// `(1 + κ1)(1 + κ2)`.
    pub product: f64,
    pub conditions_hold: bool,
}

/// `κ_i = E[g_i'(s_i)] E[s_i²] − E[s_i g_i(s_i)]` for independent sources,
/// with `g'` by central differences.
pub fn kappa_conditions(
    g: &OddFunctionPair,
    model: &dyn SourceModel,
    engine: &ExpectationEngine,
) -> Result<KappaReport> {
    if model.marginals().is_none() {
        return Err(capability(model, "independent marginals"));
    }
    let measure = engine.prepare(model)?;
    let deriv = |f: &dyn Fn(f64) -> f64, x: f64| {
        let h = 1e-5 * x.abs().max(1.0);
        (f(x + h) - f(x - h)) / (2.0 * h)
    };
    let est = measure.expect(|s| {
        [
            deriv(&*g.g1, s.s1),
            s.s1 * s.s1,
            s.s1 * (g.g1)(s.s1),
            deriv(&*g.g2, s.s2),
            s.s2 * s.s2,
            s.s2 * (g.g2)(s.s2),
        ]
    });
    let kappa1 = est[0].value * est[1].value - est[2].value;
    let kappa2 = est[3].value * est[4].value - est[5].value;
    let err1 = est[0].error * est[1].value + est[0].value * est[1].error + est[2].error;
    let err2 = est[3].error * est[4].value + est[3].value * est[4].error + est[5].error;
    let product = (1.0 + kappa1) * (1.0 + kappa2);
    let margin = |e: f64, scale: f64| (3.0 * e).max(RELATIVE_ZERO * scale.max(1.0));
    let m1 = margin(err1, est[2].value.abs());
    let m2 = margin(err2, est[5].value.abs());
    let conditions_hold = 1.0 + kappa1 > m1
        && 1.0 + kappa2 > m2
        && product - 1.0 > (1.0 + kappa2).abs() * m1 + (1.0 + kappa1).abs() * m2;
    Ok(KappaReport {
        kappa1,
        kappa2,
        product,
        conditions_hold,
    })
}

/// Finite-difference check of the linearized mean-field map around a
/// non-mixing equilibrium, in coordinates `(α, β, γ, δ)` of the
/// perturbation `[[α, γ], [δ, β]]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JacobianCheckReport {
    pub mu: f64,
    pub fd_step: f64,
    pub f: Mat2,
    pub g: Mat2,
    /// `C (I + μF) C⁻¹`.
    pub analytic_ab: Mat2,
    /// `C (I + μG) C⁻¹`.
    pub analytic_gd: Mat2,
    /// `I + μ C⁻¹ G diag(c2, c1)`, the `(γ, δ)` block obtained by carrying
    /// the unequal scales through the off-diagonal recursion. Agrees with
    /// `analytic_gd` when `c1 = c2`.
    pub analytic_gd_scaled: Mat2,
    /// Finite-difference Jacobian of `Δ ↦ step(C + Δ) − C`.
    pub jacobian: Matrix4<f64>,
    pub fd_ab: Mat2,
    pub fd_gd: Mat2,
    /// Largest entry coupling `(α, β)` with `(γ, δ)`.
    pub leakage: f64,
    pub discrepancy_ab: f64,
    pub discrepancy_gd: f64,
    pub discrepancy_gd_scaled: f64,
    /// `max(discrepancy_ab, discrepancy_gd)`.
    pub max_discrepancy: f64,
    /// Engine error on `μF`, `μG`; discrepancies below a few times this are
    /// not resolvable.
    pub engine_resolution: f64,
    /// The equilibrium was anti-diagonal and was analysed with the sources
    /// exchanged.
    pub swapped_axes: bool,
}

impl JacobianCheckReport {
    pub fn noise_limited(&self) -> bool {
        self.max_discrepancy <= 3.0 * self.engine_resolution && self.engine_resolution > 0.0
    }
}

fn coords(d: &Mat2) -> Vector4<f64> {
    Vector4::new(d[(0, 0)], d[(1, 1)], d[(0, 1)], d[(1, 0)])
}

fn from_coords(x: &Vector4<f64>) -> Mat2 {
    Mat2::new(x[0], x[2], x[3], x[1])
}

pub fn verify_lemma1_jacobian(
    h: &HMatrix,
    model: &dyn SourceModel,
    eq: &ScaleEquilibrium,
    mu: f64,
    engine: &ExpectationEngine,
    fd_step: f64,
) -> Result<JacobianCheckReport> {
    if !(fd_step > 0.0 && fd_step.is_finite()) {
        return Err(BssError::InvalidParameter(format!("fd_step must be positive, got {fd_step}")));
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(BssError::InvalidParameter(format!("mu must be positive, got {mu}")));
    }
    require_gradient(model)?;
    let swapped_axes = eq.orientation == Orientation::AntiDiagonal;
    let (c1, c2) = if swapped_axes { (eq.c2, eq.c1) } else { (eq.c1, eq.c2) };
    let mut mf = MeanField::new(h, model, engine)?;
    // C S = diag(c2, c1) (s2, s1) for the anti-diagonal limit
    let (f, g) = fg_on(h, model, &mf.measure, eq);
    if swapped_axes {
        mf.measure = mf.measure.swapped();
    }
    let c = Mat2::new(c1, 0.0, 0.0, c2);
    let c_inv = Mat2::new(1.0 / c1, 0.0, 0.0, 1.0 / c2);
    let id = Mat2::identity();
    let analytic_ab = c * (id + mu * f.value) * c_inv;
    let analytic_gd = c * (id + mu * g.value) * c_inv;
    let analytic_gd_scaled = id + mu * c_inv * g.value * Mat2::new(c2, 0.0, 0.0, c1);

    let phi = |x: &Vector4<f64>| -> Result<Vector4<f64>> {
        let cx = c + from_coords(x);
        Ok(coords(&(mf.step(&cx, mu)? - c)))
    };
    let mut jacobian = Matrix4::zeros();
    for k in 0..4 {
        let mut e = Vector4::zeros();
        e[k] = fd_step;
        let col = (phi(&e)? - phi(&(-e))?) / (2.0 * fd_step);
        jacobian.set_column(k, &col);
    }
    let fd_ab = Mat2::new(jacobian[(0, 0)], jacobian[(0, 1)], jacobian[(1, 0)], jacobian[(1, 1)]);
    let fd_gd = Mat2::new(jacobian[(2, 2)], jacobian[(2, 3)], jacobian[(3, 2)], jacobian[(3, 3)]);
    let leakage = [
        jacobian.fixed_view::<2, 2>(0, 2).abs().max(),
        jacobian.fixed_view::<2, 2>(2, 0).abs().max(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    let discrepancy_ab = (fd_ab - analytic_ab).abs().max();
    let discrepancy_gd = (fd_gd - analytic_gd).abs().max();
    let discrepancy_gd_scaled = (fd_gd - analytic_gd_scaled).abs().max();
    let ratio = (c1 / c2).max(c2 / c1);
    let engine_resolution = mu * ratio * f.error.abs().max().max(g.error.abs().max());
    Ok(JacobianCheckReport {
        mu,
        fd_step,
        f: f.value,
        g: g.value,
        analytic_ab,
        analytic_gd,
        analytic_gd_scaled,
        jacobian,
        fd_ab,
        fd_gd,
        leakage,
        discrepancy_ab,
        discrepancy_gd,
        discrepancy_gd_scaled,
        max_discrepancy: discrepancy_ab.max(discrepancy_gd),
        engine_resolution,
        swapped_axes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeparabilityOutcome {
    Separable,
    NonSeparable,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StarMatrix {
    F,
    G,
}

/// Eigen-summary of one of the canonical matrices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StarEvidence {
    pub matrix: Mat2,
    /// Ascending.
    pub eigenvalues: [f64; 2],
    /// Null-space direction of `M`: the smallest-magnitude eigenvector of
    /// `D⁻¹ M D⁻¹` mapped back through `D⁻¹`, normalized to unit length.
    pub min_eigenvector: [f64; 2],
    /// `min |λ| / max |λ|` of `D⁻¹ M D⁻¹` with `D = diag(√|M11|, √|M22|)`.
    /// The unit-diagonal rescaling makes the measure invariant under axis
    /// scaling of the sources, which acts on `M` by diagonal congruence.
    pub relative_min_eigenvalue: f64,
    /// Largest relative asymmetry `|M12 − M21| / max |M_ij|`.
    pub asymmetry: f64,
}

/// Ascending eigenvalues of the symmetric part, and the unit eigenvector of
/// the one with the smaller magnitude.
fn symmetric_eigen(m: &Mat2) -> ([f64; 2], [f64; 2]) {
    let eig = SymmetricEigen::new(0.5 * (m + m.transpose()));
    let (lo, hi) = if eig.eigenvalues[0] <= eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
    let values = [eig.eigenvalues[lo], eig.eigenvalues[hi]];
    let k = if values[0].abs() <= values[1].abs() { lo } else { hi };
    let v = eig.eigenvectors.column(k);
    (values, [v[0], v[1]])
}

impl StarEvidence {
    fn new(m: Mat2) -> Self {
        let scale = m.abs().max();
        let (eigenvalues, _) = symmetric_eigen(&m);
        let (d1, d2) = (m[(0, 0)].abs().sqrt(), m[(1, 1)].abs().sqrt());
        let d_inv = if d1 > 0.0 && d2 > 0.0 {
            Mat2::new(1.0 / d1, 0.0, 0.0, 1.0 / d2)
        } else {
            Mat2::identity()
        };
        let (unit_eig, u) = symmetric_eigen(&(d_inv * m * d_inv));
        let v = d_inv * nalgebra::Vector2::new(u[0], u[1]);
        let v = v / v.norm();
        let rho = unit_eig[0].abs().max(unit_eig[1].abs());
        Self {
            matrix: m,
            eigenvalues,
            min_eigenvector: [v[0], v[1]],
            relative_min_eigenvalue: if rho > 0.0 {
                unit_eig[0].abs().min(unit_eig[1].abs()) / rho
            } else {
                0.0
            },
            asymmetry: if scale > 0.0 { (m[(0, 1)] - m[(1, 0)]).abs() / scale } else { 0.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparabilityVerdict {
    pub model_label: String,
    pub outcome: SeparabilityOutcome,
    pub separable: bool,
    pub k1: Option<f64>,
    pub k2: Option<f64>,
    /// Null direction normalized to max-component 1 with a positive first entry.
    pub null_vector: Option<[f64; 2]>,
    pub null_matrix: Option<StarMatrix>,
    pub f_star: StarEvidence,
    pub g_star: StarEvidence,
    /// Relative residual of `K1 s1 f_{s1} − K2 s2 f_{s2}` (null vector of
    /// `F*`) or `K1 s2 f_{s1} − K2 s1 f_{s2}` (null vector of `G*`) on a
    /// probe grid.
    pub fit_residual: Option<f64>,
    pub fit_consistent: Option<bool>,
    pub tol_eig: f64,
    pub tol_fit: f64,
    pub reason: String,
}

impl SeparabilityVerdict {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |x| format!("{x:.9}"));
        let m = |x: &Mat2| format!("[[{:.9e}, {:.9e}], [{:.9e}, {:.9e}]]", x[(0, 0)], x[(0, 1)], x[(1, 0)], x[(1, 1)]);
        let _ = writeln!(s, "model: {}", self.model_label);
        let _ = writeln!(s, "outcome: {:?}", self.outcome);
        let _ = writeln!(s, "separable: {}", self.separable);
        let _ = writeln!(s, "K1: {}", opt(self.k1));
        let _ = writeln!(s, "K2: {}", opt(self.k2));
        let _ = writeln!(s, "F*: {}", m(&self.f_star.matrix));
        let _ = writeln!(s, "F*_eigenvalues: {:.9e}, {:.9e}", self.f_star.eigenvalues[0], self.f_star.eigenvalues[1]);
        let _ = writeln!(s, "F*_relative_min_eigenvalue: {:.3e}", self.f_star.relative_min_eigenvalue);
        let _ = writeln!(s, "G*: {}", m(&self.g_star.matrix));
        let _ = writeln!(s, "G*_eigenvalues: {:.9e}, {:.9e}", self.g_star.eigenvalues[0], self.g_star.eigenvalues[1]);
        let _ = writeln!(s, "G*_relative_min_eigenvalue: {:.3e}", self.g_star.relative_min_eigenvalue);
        if let Some(v) = self.null_vector {
            let _ = writeln!(s, "null_vector: [{:.9}, {:.9}] ({:?}*)", v[0], v[1], self.null_matrix.unwrap_or(StarMatrix::G));
        }
        let _ = writeln!(s, "fit_residual: {}", self.fit_residual.map_or("none".to_string(), |x| format!("{x:.3e}")));
        let _ = writeln!(s, "reason: {}", self.reason);
        s
    }

    pub const CSV_HEADER: &'static str = "model,outcome,separable,k1,k2,f_min_rel_eig,g_min_rel_eig,fit_residual";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.16e}"));
        [
            csv_field(&self.model_label),
            format!("{:?}", self.outcome).to_lowercase(),
            self.separable.to_string(),
            opt(self.k1),
            opt(self.k2),
            format!("{:.16e}", self.f_star.relative_min_eigenvalue),
            format!("{:.16e}", self.g_star.relative_min_eigenvalue),
            opt(self.fit_residual),
        ]
        .join(",")
    }
}

/// The canonical matrices `F* = −E[u uᵀ]`, `G* = −E[v vᵀ]` with
/// `u = (s1 f_{s1}/f, s2 f_{s2}/f)` and `v = (s2 f_{s1}/f, s1 f_{s2}/f)`.
pub fn canonical_matrices(model: &dyn SourceModel, engine: &ExpectationEngine) -> Result<(MatrixEstimate, MatrixEstimate)> {
    require_gradient(model)?;
    let measure = engine.prepare(model)?;
    let est = measure.expect(|s| {
        let (p1, p2) = model.score(s).unwrap_or((0.0, 0.0));
        let (u1, u2) = (s.s1 * p1, s.s2 * p2);
        let (v1, v2) = (s.s2 * p1, s.s1 * p2);
        [-u1 * u1, -u1 * u2, -u2 * u2, -v1 * v1, -v1 * v2, -v2 * v2]
    });
    let pack = |k: usize| MatrixEstimate {
        value: Mat2::new(est[k].value, est[k + 1].value, est[k + 1].value, est[k + 2].value),
        error: Mat2::new(est[k].error, est[k + 1].error, est[k + 1].error, est[k + 2].error),
    };
    Ok((pack(0), pack(3)))
}

const FIT_GRID: usize = 41;

fn fit_residual(model: &dyn SourceModel, which: StarMatrix, k1: f64, k2: f64) -> f64 {
    let (w1, w2) = model.spread();
    let mut num = 0.0_f64;
    let mut den = 0.0_f64;
    for i in 0..FIT_GRID {
        for j in 0..FIT_GRID {
            let t = |k: usize| -3.0 + 6.0 * (k as f64 + 0.5) / FIT_GRID as f64;
            let s = SamplePair::new(t(i) * w1, t(j) * w2);
            let Some((g1, g2)) = model.pdf_grad(s) else { continue };
            let (a, b) = match which {
                StarMatrix::F => (k1 * s.s1 * g1, k2 * s.s2 * g2),
                StarMatrix::G => (k1 * s.s2 * g1, k2 * s.s1 * g2),
            };
            if (a - b).is_finite() {
                num = num.max((a - b).abs());
                den = den.max(a.abs() + b.abs());
            }
        }
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Decides whether the source law admits separation by any algorithm of
/// this family, from the null spaces of `F*` and `G*`.
///
/// An eigenvalue is zero when its magnitude is at most `tol_eig` times the
/// spectral radius; magnitudes in `(tol_eig, 10·tol_eig]` make the verdict
/// inconclusive, as does a null vector whose components share a sign.
pub fn classify_separability(
    model: &dyn SourceModel,
    engine: &ExpectationEngine,
    tol_eig: f64,
    tol_fit: f64,
) -> Result<SeparabilityVerdict> {
    let (f, g) = canonical_matrices(model, engine)?;
    let f_star = StarEvidence::new(f.value);
    let g_star = StarEvidence::new(g.value);
    let mut verdict = SeparabilityVerdict {
        model_label: model.label(),
        outcome: SeparabilityOutcome::Separable,
        separable: true,
        k1: None,
        k2: None,
        null_vector: None,
        null_matrix: None,
        f_star,
        g_star,
        fit_residual: None,
        fit_consistent: None,
        tol_eig,
        tol_fit,
        reason: "F* and G* are both nonsingular".into(),
    };
    let candidates = [(StarMatrix::G, g_star), (StarMatrix::F, f_star)];
    let singular: Vec<_> = candidates
        .iter()
        .filter(|(_, e)| e.relative_min_eigenvalue <= tol_eig)
        .collect();
    let gray = candidates
        .iter()
        .any(|(_, e)| e.relative_min_eigenvalue > tol_eig && e.relative_min_eigenvalue <= 10.0 * tol_eig);

    let mut mixed = Vec::new();
    for (which, e) in singular {
        let [a, b] = e.min_eigenvector;
        let norm = a.abs().max(b.abs());
        let sign = if a != 0.0 { a.signum() } else { 1.0 };
        let v = [sign * a / norm, sign * b / norm];
        let (k1, k2) = (v[0], -v[1]);
        if k1 > 0.0 && k2 > 0.0 {
            let r = fit_residual(model, *which, k1, k2);
            verdict.outcome = SeparabilityOutcome::NonSeparable;
            verdict.separable = false;
            verdict.k1 = Some(k1);
            verdict.k2 = Some(k2);
            verdict.null_vector = Some(v);
            verdict.null_matrix = Some(*which);
            verdict.fit_residual = Some(r);
            verdict.fit_consistent = Some(r <= tol_fit);
            verdict.reason = format!(
                "{which:?}* has a zero eigenvalue (relative {:.2e}) with null vector [K1, -K2]",
                e.relative_min_eigenvalue
            );
            return Ok(verdict);
        }
        mixed.push((*which, v));
    }
    if let Some((which, v)) = mixed.first() {
        verdict.outcome = SeparabilityOutcome::Inconclusive;
        verdict.separable = false;
        verdict.null_vector = Some(*v);
        verdict.null_matrix = Some(*which);
        verdict.reason = format!("{which:?}* is singular but its null vector has same-sign components");
    } else if gray {
        verdict.outcome = SeparabilityOutcome::Inconclusive;
        verdict.separable = false;
        verdict.reason = format!("smallest relative eigenvalue lies in the gray band ({tol_eig:e}, {:e}]", 10.0 * tol_eig);
    }
    Ok(verdict)
}
