//! Density grids for the contour panels: exact pdf values where the model
//! has one, a normalized 2-D histogram otherwise.

use std::io::{self, Write};

use bss_core::sources::{sample, SourceModel};
use bss_core::SamplePair;

pub const GRID: usize = 200;
pub const HISTOGRAM_SAMPLES: usize = 1_000_000;
pub const CSV_HEADER: &str = "s1,s2,density";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensitySource {
    Pdf,
    Histogram,
}

#[derive(Debug, Clone)]
pub struct DensityGrid {
    pub half_width: (f64, f64),
    /// Row-major over `s2` (outer) and `s1` (inner), at cell centres.
    pub values: Vec<f64>,
    pub source: DensitySource,
}

fn centre(k: usize, w: f64) -> f64 {
    -w + (2.0 * k as f64 + 1.0) * w / GRID as f64
}

/// Grid half-widths cover three standard deviations, or the full support
/// of bounded models.
fn window(model: &dyn SourceModel) -> (f64, f64) {
    let probe = model.tail_probe();
    let reach = |f: fn(&SamplePair) -> f64| probe.iter().map(f).fold(0.0_f64, |a, v| a.max(v.abs()));
    let (r1, r2) = (reach(|p| p.s1), reach(|p| p.s2));
    let (sd1, sd2) = model.spread();
    ((3.0 * sd1).min(r1).max(1e-6), (3.0 * sd2).min(r2).max(1e-6))
}

pub fn density_grid(model: &dyn SourceModel, seed: u64) -> DensityGrid {
    let (w1, w2) = window(model);
    if model.has_pdf() {
        let mut values = Vec::with_capacity(GRID * GRID);
        for j in 0..GRID {
            for i in 0..GRID {
                let s = SamplePair::new(centre(i, w1), centre(j, w2));
                values.push(model.pdf(s).unwrap_or(0.0));
            }
        }
        return DensityGrid {
            half_width: (w1, w2),
            values,
            source: DensitySource::Pdf,
        };
    }
    let mut counts = vec![0u64; GRID * GRID];
    for s in sample(model, HISTOGRAM_SAMPLES, seed) {
        let i = ((s.s1 + w1) / (2.0 * w1) * GRID as f64).floor();
        let j = ((s.s2 + w2) / (2.0 * w2) * GRID as f64).floor();
        if (0.0..GRID as f64).contains(&i) && (0.0..GRID as f64).contains(&j) {
            counts[j as usize * GRID + i as usize] += 1;
        }
    }
    let cell = (2.0 * w1 / GRID as f64) * (2.0 * w2 / GRID as f64);
    let scale = 1.0 / (HISTOGRAM_SAMPLES as f64 * cell);
    DensityGrid {
        half_width: (w1, w2),
        values: counts.into_iter().map(|c| c as f64 * scale).collect(),
        source: DensitySource::Histogram,
    }
}

impl DensityGrid {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for j in 0..GRID {
            for i in 0..GRID {
                writeln!(
                    w,
                    "{:.16e},{:.16e},{:.16e}",
                    centre(i, self.half_width.0),
                    centre(j, self.half_width.1),
                    self.values[j * GRID + i]
                )?;
            }
        }
        Ok(())
    }
}
