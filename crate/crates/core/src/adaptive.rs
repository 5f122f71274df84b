//! Online recursions for the separating matrix `B_t` and the normalized
//! product `C_t = B_t A`, plus the distance to the non-mixing set.

use std::io::{self, BufRead, Write};

use nalgebra::Matrix2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BssError, Result};
use crate::nonlinearity::HMatrix;
use crate::sources::{SamplePair, SourceModel};

pub type Mat2 = Matrix2<f64>;

/// Entries beyond this magnitude count as divergence.
pub const DIVERGENCE_BOUND: f64 = 1e12;
pub const DEFAULT_THINNING: usize = 100;

/// Instantaneous mixing matrix `A` in `X_t = A S_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingMatrix(Mat2);

impl MixingMatrix {
    pub fn new(a: Mat2) -> Result<Self> {
        if a.iter().any(|v| !v.is_finite()) || a.determinant().abs() <= 1e-9 {
            return Err(BssError::InvalidParameter(format!(
                "mixing matrix must be finite and invertible, det = {}",
                a.determinant()
            )));
        }
        Ok(Self(a))
    }

    /// Entries i.i.d. uniform on `[−1, 1]`, redrawn until `|det| > 0.1`.
    /// Uses its own stream so it does not perturb the source draws of `seed`.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        loop {
            let a = Mat2::from_fn(|_, _| rng.random_range(-1.0..=1.0));
            if a.determinant().abs() > 0.1 {
                return Self(a);
            }
        }
    }

    pub fn matrix(&self) -> Mat2 {
        self.0
    }

    pub fn mix(&self, s: SamplePair) -> SamplePair {
        let x = self.0 * nalgebra::Vector2::new(s.s1, s.s2);
        SamplePair::new(x[0], x[1])
    }
}

fn check_finite(m: &Mat2, step: u64) -> Result<()> {
    if m.iter().all(|v| v.is_finite() && v.abs() <= DIVERGENCE_BOUND) {
        Ok(())
    } else {
        Err(BssError::Diverged { step })
    }
}

/// `Ŝ = M v; M ← M − μ H(Ŝ) M`.
#[inline]
fn update(m: &mut Mat2, h: &HMatrix, mu: f64, v: SamplePair) {
    let z1 = m[(0, 0)] * v.s1 + m[(0, 1)] * v.s2;
    let z2 = m[(1, 0)] * v.s1 + m[(1, 1)] * v.s2;
    let [h11, h12, h21, h22] = h.entries(z1, z2);
    let hm = Mat2::new(h11, h12, h21, h22);
    *m -= mu * hm * *m;
}

/// Practical form: estimate of `A⁻¹` updated from observations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparatorState {
    pub b: Mat2,
    pub mu: f64,
    pub t: u64,
}

impl SeparatorState {
    /// `B_0 = I`.
    pub fn new(mu: f64) -> Result<Self> {
        check_mu(mu)?;
        Ok(Self {
            b: Mat2::identity(),
            mu,
            t: 0,
        })
    }

    pub fn estimate(&self, x: SamplePair) -> SamplePair {
        let v = self.b * nalgebra::Vector2::new(x.s1, x.s2);
        SamplePair::new(v[0], v[1])
    }

    pub fn step(&mut self, h: &HMatrix, x: SamplePair) -> Result<()> {
        update(&mut self.b, h, self.mu, x);
        self.t += 1;
        check_finite(&self.b, self.t)
    }
}

/// Analysis form: `C_t = B_t A` driven directly by the sources.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedState {
    pub c: Mat2,
    pub mu: f64,
    pub t: u64,
}

impl NormalizedState {
    pub fn new(c0: Mat2, mu: f64) -> Result<Self> {
        check_mu(mu)?;
        Ok(Self { c: c0, mu, t: 0 })
    }

    pub fn step(&mut self, h: &HMatrix, s: SamplePair) -> Result<()> {
        update(&mut self.c, h, self.mu, s);
        self.t += 1;
        check_finite(&self.c, self.t)
    }
}

fn check_mu(mu: f64) -> Result<()> {
    // μ = 0 is admitted as the trivial fixed point
    if mu.is_finite() && mu >= 0.0 {
        Ok(())
    } else {
        Err(BssError::InvalidParameter(format!("step size must be ≥ 0, got {mu}")))
    }
}

/// Distance from the set of diagonal / anti-diagonal matrices with nonzero
/// entries: `Σ_rows (Σ_j|c_ij| / max_j|c_ij| − 1) + Σ_cols (…)`.
pub fn nonmixing_index(c: &Mat2) -> Result<f64> {
    let a = c.abs();
    let mut total = 0.0;
    for line in [a.row(0).transpose(), a.row(1).transpose(), a.column(0).into(), a.column(1).into()] {
        let line: nalgebra::Vector2<f64> = line;
        let max = line.max();
        if max == 0.0 || !max.is_finite() {
            return Err(BssError::ZeroLine);
        }
        total += line.sum() / max - 1.0;
    }
    Ok(total)
}

pub fn is_nonmixing(c: &Mat2, tol: f64) -> Result<bool> {
    Ok(nonmixing_index(c)? <= tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: u64,
    pub c11: f64,
    pub c12: f64,
    pub c21: f64,
    pub c22: f64,
    pub index: f64,
}

impl TrajectoryPoint {
    pub fn new(t: u64, c: &Mat2) -> Self {
        Self {
            t,
            c11: c[(0, 0)],
            c12: c[(0, 1)],
            c21: c[(1, 0)],
            c22: c[(1, 1)],
            index: nonmixing_index(c).unwrap_or(f64::NAN),
        }
    }

    pub fn matrix(&self) -> Mat2 {
        Mat2::new(self.c11, self.c12, self.c21, self.c22)
    }
}

/// Thinned record of a run of the normalized recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    pub thinning: usize,
    pub diverged: bool,
    /// State after the last completed step.
    pub final_c: Mat2,
}

pub const CSV_HEADER: &str = "t,c11,c12,c21,c22,index";

impl Trajectory {
    pub fn final_index(&self) -> f64 {
        if self.diverged {
            f64::NAN
        } else {
            nonmixing_index(&self.final_c).unwrap_or(f64::NAN)
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for p in &self.points {
            writeln!(
                w,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                p.t, p.c11, p.c12, p.c21, p.c22, p.index
            )?;
        }
        Ok(())
    }

    /// Parses the CSV written by [`Trajectory::write_csv`].
    pub fn read_csv<R: BufRead>(r: R) -> Result<Vec<TrajectoryPoint>> {
        let bad = |msg: String| BssError::InvalidParameter(format!("trajectory csv: {msg}"));
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| bad("empty".into()))??;
        if header.trim() != CSV_HEADER {
            return Err(bad(format!("unexpected header `{header}`")));
        }
        let mut out = Vec::new();
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad(format!("line {}: expected 6 fields", k + 2)));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("line {}: {e}", k + 2)));
            out.push(TrajectoryPoint {
                t: f[0].parse().map_err(|e| bad(format!("line {}: {e}", k + 2)))?,
                c11: num(f[1])?,
                c12: num(f[2])?,
                c21: num(f[3])?,
                c22: num(f[4])?,
                index: num(f[5])?,
            });
        }
        Ok(out)
    }
}

/// Iterates the normalized recursion from `C_0 = A` on i.i.d. draws seeded
/// by `seed`, recording `t = 0`, every `thinning`-th iterate, and the last.
/// Divergence stops the run early with `diverged = true`.
pub fn run(
    model: &dyn SourceModel,
    a: &MixingMatrix,
    h: &HMatrix,
    mu: f64,
    n_steps: u64,
    seed: u64,
    thinning: usize,
) -> Result<Trajectory> {
    if n_steps == 0 {
        return Err(BssError::InvalidParameter("n_steps must be ≥ 1".into()));
    }
    let thinning = thinning.max(1);
    let mut state = NormalizedState::new(a.matrix(), mu)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = vec![TrajectoryPoint::new(0, &state.c)];
    let mut diverged = false;
    for _ in 0..n_steps {
        let s = model.draw(&mut rng);
        let prev = state.c;
        if state.step(h, s).is_err() {
            diverged = true;
            points.push(TrajectoryPoint::new(state.t, &state.c));
            state.c = prev;
            break;
        }
        if state.t % thinning as u64 == 0 || state.t == n_steps {
            points.push(TrajectoryPoint::new(state.t, &state.c));
        }
    }
    Ok(Trajectory {
        points,
        thinning,
        diverged,
        final_c: state.c,
    })
}

/// Summary of a batch of seeded runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub seeds: Vec<u64>,
    pub final_index: Vec<f64>,
    pub diverged: Vec<bool>,
    pub tolerance: f64,
    pub converged_fraction: f64,
    pub mean_index: f64,
    pub min_index: f64,
    pub max_index: f64,
    pub wall_seconds: f64,
}

impl RunSummary {
    pub fn from_runs(seeds: &[u64], runs: &[Trajectory], tolerance: f64, wall_seconds: f64) -> Self {
        let final_index: Vec<f64> = runs.iter().map(Trajectory::final_index).collect();
        let diverged: Vec<bool> = runs.iter().map(|r| r.diverged).collect();
        let finite: Vec<f64> = final_index.iter().copied().filter(|v| v.is_finite()).collect();
        let n = runs.len().max(1) as f64;
        let converged = final_index.iter().filter(|&&v| v < tolerance).count() as f64;
        let agg = |f: fn(f64, f64) -> f64, init: f64| {
            if finite.is_empty() {
                f64::NAN
            } else {
                finite.iter().copied().fold(init, f)
            }
        };
        Self {
            seeds: seeds.to_vec(),
            final_index,
            diverged,
            tolerance,
            converged_fraction: converged / n,
            mean_index: if finite.is_empty() { f64::NAN } else { finite.iter().sum::<f64>() / finite.len() as f64 },
            min_index: agg(f64::min, f64::INFINITY),
            max_index: agg(f64::max, f64::NEG_INFINITY),
            wall_seconds,
        }
    }

    pub fn any_diverged(&self) -> bool {
        self.diverged.iter().any(|&d| d)
    }

    pub fn count_below(&self, tol: f64) -> usize {
        self.final_index.iter().filter(|&&v| v < tol).count()
    }

    pub fn count_above(&self, tol: f64) -> usize {
        self.final_index.iter().filter(|&&v| v > tol).count()
    }
}

/// Runs one trajectory per seed (mixing matrix from [`MixingMatrix::random`])
/// in parallel; results come back in seed order.
pub fn run_seeds(
    model: &dyn SourceModel,
    h: &HMatrix,
    mu: f64,
    n_steps: u64,
    seeds: &[u64],
    thinning: usize,
) -> Result<Vec<Trajectory>> {
    run_seeds_with(model, h, mu, n_steps, seeds, thinning, MixingMatrix::random)
}

/// As [`run_seeds`], with the mixing matrix for each seed supplied by `mixing`.
pub fn run_seeds_with(
    model: &dyn SourceModel,
    h: &HMatrix,
    mu: f64,
    n_steps: u64,
    seeds: &[u64],
    thinning: usize,
    mixing: impl Fn(u64) -> MixingMatrix + Sync,
) -> Result<Vec<Trajectory>> {
    use rayon::prelude::*;
    seeds
        .par_iter()
        .map(|&seed| run(model, &mixing(seed), h, mu, n_steps, seed, thinning))
        .collect()
}
