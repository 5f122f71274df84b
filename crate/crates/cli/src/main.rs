//! `bss`: run separation scenarios, stability and separability analyses,
//! and the three figure studies.

mod contour;
mod figures;
mod plot;

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use bss_core::adaptive::run_seeds_with;
use bss_core::config::Scenario;
use bss_core::stability::{
    SeparabilityVerdict, StabilityReport, DEFAULT_TOL_EIG, DEFAULT_TOL_FIT,
};
use bss_core::{classify_separability, stability_report, BssError, RunSummary, Trajectory};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

const EXIT_PARSE: u8 = 1;
const EXIT_DIVERGED: u8 = 2;
const EXIT_CAPABILITY: u8 = 3;

/// Adaptive blind source separation experiments.
///
/// Scenario files are JSON objects with the fields
///   model       {"name": ...} one of gaussian_pair, gaussian_scale_mixture,
///               polar{d}, contaminated{epsilon,f1,f2,g1,g2},
///               elliptical{K1,K2,omega_name}, independent{m1,m2},
///               laplace_pair{scale}, uniform_pair{half_width},
///               smoothed_uniform_pair{half_width,edge}, scaled{inner,a,b}
///   h           {"name": ...} one of classical_cubic, absvalue,
///               classical{g_name: cubic|tanh|identity}, score_based{offset}
///   mu          step size (≥ 0)
///   n_steps     iterations per seed (≥ 1)
///   seeds       default [1..10]
///   mixing      explicit [[a11,a12],[a21,a22]]; default: random per seed
///   mixing_seed one random mixing matrix for all seeds
///   engine      {"mode":"quadrature","nodes":64} (default) or
///               {"mode":"monte_carlo","samples":200000,"seed":0}
///   thinning    trajectory stride, default 100
///   tolerance   convergence threshold on the index, default 0.15
///   out_dir     default ./bss-out
///
/// Exit codes: 0 success, 1 invalid input, 2 a run diverged, 3 the model
/// lacks a capability (e.g. analytic pdf) the command needs.
#[derive(Debug, Parser)]
#[command(name = "bss", version, verbatim_doc_comment)]
struct Cli {
    /// Run only this seed, replacing the scenario's seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the scenario's `out_dir`.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Skip SVG plots.
    #[arg(long, global = true)]
    no_plots: bool,
    /// Worker threads for the seed pool (default: all cores).
    #[arg(long, env = "BSS_THREADS", global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the adaptive recursion for every seed; one CSV per seed plus
    /// summary.json.
    Simulate { scenario: PathBuf },
    /// Solve the scale equilibrium and report F, G and the Routh–Hurwitz verdict.
    Stability { scenario: PathBuf },
    /// Classify the scenario's source law as separable or not.
    Separability {
        scenario: PathBuf,
        /// Relative zero tolerance for eigenvalues.
        #[arg(long, default_value_t = DEFAULT_TOL_EIG)]
        tol_eig: f64,
        /// Tolerance on the relative elliptical-fit residual.
        #[arg(long, default_value_t = DEFAULT_TOL_FIT)]
        tol_fit: f64,
    },
    /// Regenerate a figure study: density grid, trajectories and plots.
    Reproduce {
        figure: figures::Figure,
        /// Step size (default: 0.005 for fig2, 0.0003 for fig3/fig4).
        #[arg(long)]
        mu: Option<f64>,
        /// Iterations (default: 200000 for fig2, 400000 for fig3/fig4).
        #[arg(long)]
        n_steps: Option<u64>,
    },
}

#[derive(Debug)]
enum Failure {
    Core(BssError),
    Diverged(String),
}

impl From<BssError> for Failure {
    fn from(e: BssError) -> Self {
        Self::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::Core(BssError::Io(e))
    }
}

fn exit_code(e: &BssError) -> u8 {
    match e {
        BssError::Capability { .. } => EXIT_CAPABILITY,
        BssError::Diverged { .. } => EXIT_DIVERGED,
        _ => EXIT_PARSE,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_PARSE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads.filter(|&n| n > 0) {
        // the global pool can only be configured once; a failure here just
        // keeps the default size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Diverged(msg)) => {
            eprintln!("diverged: {msg}");
            ExitCode::from(EXIT_DIVERGED)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Simulate { scenario } => {
            let sc = load(scenario, cli)?;
            simulate(&sc, &out_dir(cli, &sc), !cli.no_plots)
        }
        Command::Stability { scenario } => {
            let sc = load(scenario, cli)?;
            stability(&sc, &out_dir(cli, &sc))
        }
        Command::Separability {
            scenario,
            tol_eig,
            tol_fit,
        } => {
            let sc = load(scenario, cli)?;
            separability(&sc, &out_dir(cli, &sc), *tol_eig, *tol_fit)
        }
        Command::Reproduce { figure, mu, n_steps } => {
            let dir = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("bss-out"));
            figures::reproduce(*figure, &dir, cli.seed.unwrap_or(1), *mu, *n_steps, !cli.no_plots)
        }
    }
}

fn load(path: &Path, cli: &Cli) -> Result<Scenario, Failure> {
    let mut sc = Scenario::from_path(path)?;
    if let Some(seed) = cli.seed {
        sc.seeds = vec![seed];
    }
    Ok(sc)
}

fn out_dir(cli: &Cli, sc: &Scenario) -> PathBuf {
    cli.out_dir
        .clone()
        .or_else(|| sc.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("bss-out"))
}

pub(crate) fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<(), Failure> {
    let f = fs::File::create(path)?;
    traj.write_csv(BufWriter::new(f))?;
    Ok(())
}

#[derive(Serialize)]
struct SimulationSummary<'a> {
    model: String,
    h: &'a str,
    mu: f64,
    n_steps: u64,
    #[serde(flatten)]
    summary: &'a RunSummary,
}

fn simulate(sc: &Scenario, dir: &Path, plots: bool) -> Result<(), Failure> {
    let model = sc.model.build()?;
    let h = sc.h.build(&model)?;
    fs::create_dir_all(dir)?;
    let start = Instant::now();
    let runs = run_seeds_with(model.as_ref(), &h, sc.mu, sc.n_steps, &sc.seeds, sc.thinning, |s| {
        sc.mixing_for(s)
    })?;
    let wall = start.elapsed().as_secs_f64();
    for (seed, traj) in sc.seeds.iter().zip(&runs) {
        write_trajectory(&dir.join(format!("trajectory_seed{seed}.csv")), traj)?;
        if plots {
            let title = format!("{} / {} / seed {seed}", model.label(), h.label);
            fs::write(
                dir.join(format!("trajectory_seed{seed}.svg")),
                plot::trajectory_svg(&title, &traj.points),
            )?;
        }
    }
    let summary = RunSummary::from_runs(&sc.seeds, &runs, sc.tolerance, wall);
    let record = SimulationSummary {
        model: model.label(),
        h: &h.label,
        mu: sc.mu,
        n_steps: sc.n_steps,
        summary: &summary,
    };
    fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&record).map_err(BssError::from)? + "\n",
    )?;
    println!("model: {}", record.model);
    println!("h: {}", h.label);
    for (seed, idx) in summary.seeds.iter().zip(&summary.final_index) {
        println!("seed {seed}: final index {idx:.6}");
    }
    println!(
        "converged fraction (index < {}): {:.2}",
        summary.tolerance, summary.converged_fraction
    );
    println!(
        "index mean/min/max: {:.6} / {:.6} / {:.6}",
        summary.mean_index, summary.min_index, summary.max_index
    );
    println!("wall time: {wall:.2}s");
    if summary.any_diverged() {
        let seeds: Vec<String> = summary
            .seeds
            .iter()
            .zip(&summary.diverged)
            .filter(|(_, &d)| d)
            .map(|(s, _)| s.to_string())
            .collect();
        return Err(Failure::Diverged(format!("seeds {}", seeds.join(", "))));
    }
    Ok(())
}

fn stability(sc: &Scenario, dir: &Path) -> Result<(), Failure> {
    let model = sc.model.build()?;
    let h = sc.h.build(&model)?;
    let engine = sc.engine.build()?;
    let report = stability_report(&h, model.as_ref(), &engine)?;
    fs::create_dir_all(dir)?;
    let text = report.to_text();
    print!("{text}");
    fs::write(dir.join("stability.txt"), &text)?;
    fs::write(
        dir.join("stability.csv"),
        format!("{}\n{}\n", StabilityReport::CSV_HEADER, report.csv_row()),
    )?;
    Ok(())
}

fn separability(sc: &Scenario, dir: &Path, tol_eig: f64, tol_fit: f64) -> Result<(), Failure> {
    let model = sc.model.build()?;
    let engine = sc.engine.build()?;
    let verdict = classify_separability(model.as_ref(), &engine, tol_eig, tol_fit)?;
    fs::create_dir_all(dir)?;
    let text = verdict.to_text();
    print!("{text}");
    fs::write(dir.join("separability.txt"), &text)?;
    fs::write(
        dir.join("separability.csv"),
        format!("{}\n{}\n", SeparabilityVerdict::CSV_HEADER, verdict.csv_row()),
    )?;
    Ok(())
}

impl ValueEnum for figures::Figure {
    fn value_variants<'a>() -> &'a [Self] {
        &[Self::Fig2, Self::Fig3, Self::Fig4]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(self.name()))
    }
}
