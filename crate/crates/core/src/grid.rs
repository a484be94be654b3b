//! Truncated discretization of the two-sided Wiener process: the cell grid,
//! reproducible Gaussian increment sampling, and first-chaos integrals.

use crate::error::{HermiteError, Result};
use crate::numeric::pairwise_dot;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Uniform cell grid covering [x_min, x_max], the truncated index set of the
/// driving Brownian motion. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
    pub delta: f64,
    pub midpoints: Vec<f64>,
}

impl TimeGrid {
    /// Left edge of cell i.
    pub fn cell_left(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.delta
    }

    /// Index of the first cell whose midpoint exceeds `t` (n_cells if none).
    pub fn first_midpoint_after(&self, t: f64) -> usize {
        self.midpoints.partition_point(|&m| m <= t)
    }

    /// True when `t` is usable as a process time on this grid. The upper
    /// edge is included: the kernel of Z_{x_max} is supported on xi < x_max,
    /// so nothing is truncated on the right.
    pub fn contains(&self, t: f64) -> bool {
        t > self.x_min && t <= self.x_max
    }
}

/// One reproducible Brownian increment path on a grid; increments[i] is the
/// Brownian mass of cell i, distributed Normal(0, delta).
#[derive(Debug, Clone, PartialEq)]
pub struct WienerSample {
    pub increments: Vec<f64>,
    pub seed: u64,
    pub stream_id: u64,
}

/// Builds a grid covering [-M, x_max] with `n_cells` uniform cells.
pub fn build_grid(m: f64, x_max: f64, n_cells: usize) -> Result<TimeGrid> {
    if !(m > 0.0) || !(x_max > 0.0) {
        return Err(HermiteError::Config(format!(
            "grid extents must be positive, got M={m}, x_max={x_max}"
        )));
    }
    if n_cells < 2 {
        return Err(HermiteError::Config(format!(
            "grid needs at least 2 cells, got {n_cells}"
        )));
    }
    let x_min = -m;
    let delta = (x_max - x_min) / n_cells as f64;
    let midpoints = (0..n_cells)
        .map(|i| x_min + (i as f64 + 0.5) * delta)
        .collect();
    Ok(TimeGrid { x_min, x_max, n_cells, delta, midpoints })
}

/// Draws the increments of one path. Streams are counter-based: the generator
/// is keyed by (seed, stream_id), so sample `s` is identical no matter how
/// many workers the caller spreads streams over.
pub fn sample_increments(grid: &TimeGrid, seed: u64, stream_id: u64) -> WienerSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    let normal = Normal::new(0.0, grid.delta.sqrt()).expect("positive cell width");
    let increments = (0..grid.n_cells).map(|_| normal.sample(&mut rng)).collect();
    WienerSample { increments, seed, stream_id }
}

/// First-chaos integral B(h) = sum_i h[i] * dB[i] of a step function given by
/// its per-cell values.
pub fn wiener_integral(h: &[f64], sample: &WienerSample) -> Result<f64> {
    if h.len() != sample.increments.len() {
        return Err(HermiteError::Shape(format!(
            "step function has {} cells, sample has {}",
            h.len(),
            sample.increments.len()
        )));
    }
    Ok(pairwise_dot(h, &sample.increments))
}
