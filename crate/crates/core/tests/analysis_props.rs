use std::sync::Arc;

use bss_core::meanfield::MeanField;
use bss_core::sources::{AffineModel, EllipticalModel, EllipticalModelConfig, PolarModelConfig, RadialProfile};
use bss_core::stability::{canonical_matrices, SeparabilityOutcome, DEFAULT_TOL_EIG, DEFAULT_TOL_FIT};
use bss_core::*;
use proptest::prelude::*;

fn quad() -> ExpectationEngine {
    ExpectationEngine::quadrature(64).unwrap()
}

fn nonlinearities() -> Vec<HMatrix> {
    vec![
        make_classical_cubic(),
        make_absvalue(),
        make_classical(OddFunctionPair::tanh()).unwrap(),
    ]
}

fn elliptical(k1: f64, k2: f64) -> EllipticalModel {
    make_elliptical(EllipticalModelConfig {
        omega: RadialProfile::Gaussian,
        k1,
        k2,
    })
    .unwrap()
}

fn smooth_models() -> Vec<SharedModel> {
    let su = Marginal::SmoothedUniform {
        half_width: 3f64.sqrt(),
        edge: 0.05,
    };
    vec![
        Arc::new(make_gaussian_pair()),
        Arc::new(make_gaussian_scale_mixture()),
        Arc::new(make_independent(
            Marginal::Laplace { scale: 1.0 },
            Marginal::Laplace { scale: 1.0 },
        )),
        Arc::new(make_independent(su, su)),
        Arc::new(elliptical(2.0, 3.0)),
    ]
}

#[test]
fn residuals_are_sign_symmetric_and_cross_terms_vanish() {
    let engine = quad();
    for model in smooth_models() {
        for h in nonlinearities() {
            for (c1, c2) in [(0.7, 1.3), (1.0, 1.0), (2.0, 0.4)] {
                let base = equilibrium_residuals(&h, model.as_ref(), c1, c2, &engine).unwrap();
                let scale = base[0].value.abs().max(base[3].value.abs()).max(1.0);
                for (s1, s2) in [(1.0, 1.0), (-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)] {
                    let r = equilibrium_residuals(&h, model.as_ref(), s1 * c1, s2 * c2, &engine).unwrap();
                    let ctx = format!("{} / {} at ({}, {})", model.label(), h.label, s1 * c1, s2 * c2);
                    for k in [0, 3] {
                        assert!((r[k].value - base[k].value).abs() <= 1e-10 * scale, "{ctx}: diagonal {k}");
                    }
                    for k in [1, 2] {
                        assert!(r[k].value.abs() <= 1e-10 * scale, "{ctx}: off-diagonal {k} = {}", r[k].value);
                    }
                }
            }
        }
    }
}

#[test]
fn monte_carlo_and_quadrature_agree() {
    let mc = ExpectationEngine::monte_carlo(200_000, 17).unwrap();
    let q = quad();
    for model in smooth_models() {
        for h in nonlinearities() {
            let a = equilibrium_residuals(&h, model.as_ref(), 0.8, 1.1, &mc).unwrap();
            let b = equilibrium_residuals(&h, model.as_ref(), 0.8, 1.1, &q).unwrap();
            for k in 0..4 {
                let band = 4.0 * (a[k].error.powi(2) + b[k].error.powi(2)).sqrt() + 1e-12;
                assert!(
                    (a[k].value - b[k].value).abs() <= band,
                    "{} / {} entry {k}: mc {:?} vs quadrature {:?}",
                    model.label(),
                    h.label,
                    a[k],
                    b[k]
                );
            }
        }
    }
}

#[test]
fn meanfield_converges_at_the_linearized_rate() {
    let model = make_gaussian_scale_mixture();
    let engine = quad();
    let mu = 0.05;
    for h in [make_classical_cubic(), make_absvalue()] {
        let eq = solve_scale_equilibrium(&h, &model, &engine, Orientation::Diagonal, 1e-13).unwrap();
        let star = eq.matrix();
        let mf = MeanField::new(&h, &model, &engine).unwrap();
        let fixed = (mf.step(&star, mu).unwrap() - star).abs().max();
        assert!(fixed < 1e-10, "{}: fixed-point defect {fixed:e}", h.label);

        let f = compute_f(&h, &model, &eq, &engine).unwrap();
        let rho = (Mat2::identity() + mu * f)
            .complex_eigenvalues()
            .iter()
            .fold(0.0_f64, |a, z| a.max(z.norm()));
        // long enough to shrink the initial offset by 10^4 at rate rho
        let steps = (4.0 * std::f64::consts::LN_10 / -rho.ln()).ceil() as usize;
        let c0 = Mat2::new(eq.c1 * 1.02, 0.0, 0.0, eq.c2 * 0.99);
        let path = mf.iterate(&c0, mu, steps).unwrap();
        let dev = |k: usize| (path[k] - star).abs().max();
        assert!(dev(steps) < 1e-3 * dev(0), "{}: no convergence", h.label);
        let rate = dev(steps) / dev(steps - 1);
        assert!((rate - rho).abs() < 2e-3, "{}: rate {rate} vs spectral radius {rho}", h.label);
    }
}

#[test]
fn averaged_runs_track_the_meanfield_path_more_closely_for_smaller_steps() {
    const RUNS: u64 = 200;
    const HORIZON: f64 = 4.0;
    let model = make_gaussian_scale_mixture();
    let h = make_absvalue();
    let c0 = Mat2::new(1.0, 0.4, 0.3, 0.9);
    let a = MixingMatrix::new(c0).unwrap();
    let mf = MeanField::new(&h, &model, &quad()).unwrap();
    let deviation = |mu: f64| {
        let steps = (HORIZON / mu).round() as u64;
        let thinning = (0.5 / mu).round() as usize;
        let path = mf.iterate(&c0, mu, steps as usize).unwrap();
        let mut mean = vec![Mat2::zeros(); (steps as usize) / thinning + 1];
        for seed in 0..RUNS {
            let traj = run(&model, &a, &h, mu, steps, seed, thinning).unwrap();
            assert!(!traj.diverged);
            for (m, p) in mean.iter_mut().zip(&traj.points) {
                *m += p.matrix() / RUNS as f64;
            }
        }
        mean.iter()
            .enumerate()
            .map(|(k, m)| (m - path[k * thinning]).abs().max())
            .fold(0.0_f64, f64::max)
    };
    let coarse = deviation(0.02);
    let fine = deviation(0.005);
    assert!(fine < coarse, "deviation {fine} at 0.005 vs {coarse} at 0.02");
}

#[test]
fn canonical_matrices_are_symmetric_negative_semidefinite() {
    let mut models = smooth_models();
    models.push(Arc::new(make_polar_dependent(PolarModelConfig { d: 0.0 })));
    for model in models {
        let (f, g) = canonical_matrices(model.as_ref(), &quad()).unwrap();
        for (name, m) in [("F*", f), ("G*", g)] {
            let v = m.value;
            let scale = v.abs().max();
            assert!((v[(0, 1)] - v[(1, 0)]).abs() <= m.error.max() + 1e-12 * scale);
            let max_eig = v.symmetric_eigenvalues().max();
            assert!(max_eig <= 1e-9 * scale, "{} {name}: max eigenvalue {max_eig}", model.label());
        }
    }
}

fn d1_h11(h: &HMatrix, z1: f64, z2: f64) -> f64 {
    let e = 1e-5 * z1.abs().max(1.0);
    ((h.h11)(z1 + e, z2) - (h.h11)(z1 - e, z2)) / (2.0 * e)
}

#[test]
fn integration_by_parts_identity_holds_at_equilibrium() {
    let engine = quad();
    let models: Vec<SharedModel> = vec![
        Arc::new(make_gaussian_scale_mixture()),
        Arc::new(make_independent(
            Marginal::Laplace { scale: 1.0 },
            Marginal::Laplace { scale: 1.0 },
        )),
    ];
    for model in models {
        for h in [make_classical_cubic(), make_absvalue()] {
            let eq = solve_scale_equilibrium(&h, model.as_ref(), &engine, Orientation::Diagonal, 1e-13).unwrap();
            let (c1, c2) = (eq.c1, eq.c2);
            let m = engine.prepare(model.as_ref()).unwrap();
            let [lhs, rhs, odd] = m.mean(|s| {
                let (z1, z2) = (c1 * s.s1, c2 * s.s2);
                let (p1, _) = model.score(s).unwrap();
                let d = d1_h11(&h, z1, z2);
                [d * s.s1, -(h.h11)(z1, z2) * s.s1 * p1 / c1, d * s.s2]
            });
            let ctx = format!("{} / {}", model.label(), h.label);
            assert!((lhs - rhs).abs() <= 1e-3, "{ctx}: {lhs} vs {rhs}");
            assert!(odd.abs() <= 1e-3, "{ctx}: odd expectation {odd}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn classifier_is_invariant_under_axis_scaling(a in 0.5..2.0f64, b in 0.5..2.0f64) {
        let classify = |m: &dyn SourceModel| {
            classify_separability(m, &quad(), DEFAULT_TOL_EIG, DEFAULT_TOL_FIT).unwrap()
        };
        let scaled = |inner: SharedModel| AffineModel::new(inner, (a, b), (0.0, 0.0)).unwrap();
        let cases: [(SharedModel, Option<f64>); 3] = [
            (Arc::new(elliptical(2.0, 3.0)), Some(2.0 / 3.0)),
            (Arc::new(make_polar_dependent(PolarModelConfig { d: 0.0 })), Some(1.0)),
            (Arc::new(make_gaussian_scale_mixture()), None),
        ];
        for (inner, ratio) in cases {
            let before = classify(inner.as_ref());
            let after = classify(&scaled(inner.clone()));
            prop_assert_eq!(before.outcome, after.outcome, "{}", inner.label());
            if let Some(r) = ratio {
                prop_assert_eq!(after.outcome, SeparabilityOutcome::NonSeparable);
                // the profile argument K2 s1² + K1 s2² becomes K2 s1²/a² + K1 s2²/b²
                let expected = r * a * a / (b * b);
                let got = after.k1.unwrap() / after.k2.unwrap();
                prop_assert!((got / expected - 1.0).abs() < 0.02, "{}: {} vs {}", inner.label(), got, expected);
            } else {
                prop_assert_eq!(after.outcome, SeparabilityOutcome::Separable);
            }
        }
    }
}
