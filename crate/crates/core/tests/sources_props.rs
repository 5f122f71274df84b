use std::sync::Arc;

use bss_core::sources::{
    pdf_mass, AffineModel, EllipticalModelConfig, PolarModelConfig, RadialProfile,
};
use bss_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn analytic_models() -> Vec<SharedModel> {
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
        Arc::new(make_independent(
            Marginal::Uniform { half_width: 1.0 },
            Marginal::gaussian(0.5),
        )),
        Arc::new(make_polar_dependent(PolarModelConfig { d: 0.0 })),
        Arc::new(
            make_elliptical(EllipticalModelConfig {
                omega: RadialProfile::Gaussian,
                k1: 2.0,
                k2: 3.0,
            })
            .unwrap(),
        ),
        Arc::new(
            make_elliptical(EllipticalModelConfig {
                omega: RadialProfile::ExpSqrt,
                k1: 1.0,
                k2: 0.5,
            })
            .unwrap(),
        ),
        Arc::new(
            AffineModel::new(Arc::new(make_gaussian_scale_mixture()), (0.5, 3.0), (0.0, 0.0)).unwrap(),
        ),
    ]
}

#[test]
fn analytic_densities_integrate_to_one() {
    for m in analytic_models() {
        // the support edge for bounded laws, 12 RMS widths otherwise
        let probe = m.tail_probe();
        let (sd1, sd2) = m.spread();
        let w1 = probe.iter().fold(0.0_f64, |a, p| a.max(p.s1.abs())).min(12.0 * sd1);
        let w2 = probe.iter().fold(0.0_f64, |a, p| a.max(p.s2.abs())).min(12.0 * sd2);
        let mass = pdf_mass(m.as_ref(), w1, w2, 300, 8).unwrap();
        assert!((mass - 1.0).abs() < 1e-3, "{}: mass {mass}", m.label());
    }
}

#[test]
fn density_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for m in analytic_models().into_iter().filter(|m| m.has_gradient()) {
        let (sd1, sd2) = m.spread();
        let mut checked = 0;
        while checked < 100 {
            let s = SamplePair::new(rng.random_range(-3.0..3.0) * sd1, rng.random_range(-3.0..3.0) * sd2);
            let f = m.pdf(s).unwrap();
            if f < 1e-8 {
                continue;
            }
            let (g1, g2) = m.pdf_grad(s).unwrap();
            let step = |x: f64| 1e-5 * x.abs().max(1.0);
            let (e1, e2) = (step(s.s1), step(s.s2));
            let fd1 = (m.pdf(SamplePair::new(s.s1 + e1, s.s2)).unwrap()
                - m.pdf(SamplePair::new(s.s1 - e1, s.s2)).unwrap())
                / (2.0 * e1);
            let fd2 = (m.pdf(SamplePair::new(s.s1, s.s2 + e2)).unwrap()
                - m.pdf(SamplePair::new(s.s1, s.s2 - e2)).unwrap())
                / (2.0 * e2);
            let scale = g1.abs().max(g2.abs()).max(f);
            assert!(
                (g1 - fd1).abs() <= 1e-5 * scale && (g2 - fd2).abs() <= 1e-5 * scale,
                "{} at {s:?}: ({g1}, {g2}) vs ({fd1}, {fd2})",
                m.label()
            );
            checked += 1;
        }
    }
}

#[test]
fn shipped_models_are_quadrantally_symmetric() {
    let mut models = analytic_models();
    models.push(Arc::new(make_polar_dependent(PolarModelConfig { d: 1.0 })));
    for m in models {
        let check = check_quadrantal_symmetry(m.as_ref(), 1e-12);
        assert!(check.symmetric, "{}: {check:?}", m.label());
    }
    let shifted = AffineModel::new(Arc::new(make_gaussian_pair()), (1.0, 1.0), (0.3, 0.0)).unwrap();
    assert!(!check_quadrantal_symmetry(&shifted, 1e-12).symmetric);
}

#[test]
fn sample_second_moments_match_within_three_standard_errors() {
    const N: usize = 1_000_000;
    for m in analytic_models() {
        let draws = sample(m.as_ref(), N, 5);
        let (m1, m2) = m.second_moments();
        for (k, target) in [(0, m1), (1, m2)] {
            let sq: Vec<f64> = draws
                .iter()
                .map(|s| if k == 0 { s.s1 * s.s1 } else { s.s2 * s.s2 })
                .collect();
            let mean = sq.iter().sum::<f64>() / N as f64;
            let var = sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (N - 1) as f64;
            let se = (var / N as f64).sqrt();
            assert!(
                (mean - target).abs() <= 3.0 * se,
                "{} axis {k}: {mean} vs {target} (se {se})",
                m.label()
            );
        }
    }
}
