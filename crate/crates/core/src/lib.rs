//! Adaptive blind separation of two, possibly dependent, sources from
//! instantaneous mixtures.
//!
//! * [`sources`]: source laws with samplers, analytic densities and gradients.
//! * [`nonlinearity`]: the matrix function `H(Z)` and its parity checks.
//! * [`adaptive`]: the stochastic recursions for `B_t` and `C_t = B_t A`.
//! * [`meanfield`]: expectations, the mean-field map and scale equilibria.
//! * [`stability`]: local stability matrices, Routh–Hurwitz verdicts and the
//!   separability classifier.
//! * [`config`]: named models and nonlinearities for scenario files.

pub mod adaptive;
pub mod config;
pub mod error;
pub mod meanfield;
pub mod nonlinearity;
pub mod quadrature;
pub mod sources;
pub mod stability;

pub use adaptive::{
    is_nonmixing, nonmixing_index, run, run_seeds, Mat2, MixingMatrix, NormalizedState,
    RunSummary, SeparatorState, Trajectory, TrajectoryPoint,
};
pub use error::{BssError, Result};
pub use meanfield::{
    equilibrium_residuals, meanfield_step, solve_scale_equilibrium, Estimate, ExpectationEngine,
    Orientation, ScaleEquilibrium,
};
pub use nonlinearity::{
    make_absvalue, make_classical, make_classical_cubic, make_score_based, validate_parities,
    HMatrix, OddFunctionPair, ScoreOffset,
};
pub use sources::{
    check_quadrantal_symmetry, make_contaminated, make_elliptical, make_gaussian_pair,
    make_gaussian_scale_mixture, make_independent, make_polar_dependent, sample, Marginal,
    SamplePair, SharedModel, SourceModel,
};
pub use stability::{
    classify_separability, compute_f, compute_g, kappa_conditions, routh_hurwitz,
    stability_report, verify_lemma1_jacobian, JacobianCheckReport, KappaReport,
    SeparabilityVerdict, StabilityReport,
};
