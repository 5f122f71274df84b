//! The three figure studies: a density grid of the source law and one
//! trajectory per nonlinearity, all from a single mixing seed.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use bss_core::sources::PolarModelConfig;
use bss_core::{
    make_absvalue, make_classical_cubic, make_gaussian_scale_mixture, make_polar_dependent, run,
    HMatrix, MixingMatrix, SharedModel,
};

use crate::{contour, plot, write_trajectory, Failure};

/// Step size and length for the independent scale-mixture study.
pub const FIG2_MU: f64 = 0.005;
pub const FIG2_STEPS: u64 = 200_000;
/// Step size and length for the dependent polar studies. The polar runs
/// need a smaller step than the scale mixture for the d = 1 trajectory to
/// settle below the convergence threshold.
pub const POLAR_MU: f64 = 0.0003;
pub const POLAR_STEPS: u64 = 400_000;
pub const THINNING: usize = 100;
pub const CONVERGENCE_TOL: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Fig2,
    Fig3,
    Fig4,
}

impl Figure {
    pub fn name(self) -> &'static str {
        match self {
            Self::Fig2 => "fig2",
            Self::Fig3 => "fig3",
            Self::Fig4 => "fig4",
        }
    }

    fn model(self) -> SharedModel {
        match self {
            Self::Fig2 => std::sync::Arc::new(make_gaussian_scale_mixture()),
            Self::Fig3 => std::sync::Arc::new(make_polar_dependent(PolarModelConfig { d: 1.0 })),
            Self::Fig4 => std::sync::Arc::new(make_polar_dependent(PolarModelConfig { d: 0.0 })),
        }
    }

    fn nonlinearities(self) -> Vec<HMatrix> {
        match self {
            Self::Fig2 => vec![make_classical_cubic(), make_absvalue()],
            Self::Fig3 | Self::Fig4 => vec![make_classical_cubic()],
        }
    }

    fn budget(self) -> (f64, u64) {
        match self {
            Self::Fig2 => (FIG2_MU, FIG2_STEPS),
            Self::Fig3 | Self::Fig4 => (POLAR_MU, POLAR_STEPS),
        }
    }
}

/// Writes `<dir>/<figure>/contour.csv` and one `trajectory_<h>.csv` (plus
/// SVG) per nonlinearity.
pub fn reproduce(
    figure: Figure,
    dir: &Path,
    seed: u64,
    mu: Option<f64>,
    n_steps: Option<u64>,
    plots: bool,
) -> Result<(), Failure> {
    let (default_mu, default_steps) = figure.budget();
    let (mu, n_steps) = (mu.unwrap_or(default_mu), n_steps.unwrap_or(default_steps));
    let dir = dir.join(figure.name());
    fs::create_dir_all(&dir)?;
    let model = figure.model();

    let grid = contour::density_grid(model.as_ref(), seed);
    grid.write_csv(BufWriter::new(fs::File::create(dir.join("contour.csv"))?))?;
    println!(
        "{}: contour grid {}x{} ({:?}) over [-{:.3}, {:.3}] x [-{:.3}, {:.3}]",
        figure.name(),
        contour::GRID,
        contour::GRID,
        grid.source,
        grid.half_width.0,
        grid.half_width.0,
        grid.half_width.1,
        grid.half_width.1
    );

    let mixing = MixingMatrix::random(seed);
    let mut diverged = Vec::new();
    for h in figure.nonlinearities() {
        let traj = run(model.as_ref(), &mixing, &h, mu, n_steps, seed, THINNING)?;
        write_trajectory(&dir.join(format!("trajectory_{}.csv", h.label)), &traj)?;
        if plots {
            let title = format!("{} / {} / mu = {mu} / seed {seed}", model.label(), h.label);
            fs::write(
                dir.join(format!("trajectory_{}.svg", h.label)),
                plot::trajectory_svg(&title, &traj.points),
            )?;
        }
        let idx = traj.final_index();
        println!(
            "{}: {} final index {idx:.6} ({})",
            figure.name(),
            h.label,
            if traj.diverged {
                "diverged"
            } else if idx < CONVERGENCE_TOL {
                "non-mixing"
            } else {
                "mixing"
            }
        );
        if traj.diverged {
            diverged.push(h.label.clone());
        }
    }
    if !diverged.is_empty() {
        return Err(Failure::Diverged(diverged.join(", ")));
    }
    Ok(())
}
