//! Time grids and grid functions.
//!
//! Most routines in the crate operate on a shared notion of a time grid:
//! a strictly increasing sequence of points starting at `0`. Samplers and
//! operators that need positive times simply skip the origin internally.

use crate::{Error, Result};

/// A strictly increasing time grid `0 = t_0 < t_1 < … < t_{N-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    /// Builds a grid from explicit points.
    ///
    /// Requirements: at least two points, first point exactly `0`,
    /// strictly increasing, all finite.
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("time grid needs at least two points"));
        }
        if points[0] != 0.0 {
            return Err(Error::invalid("time grid must start at 0"));
        }
        for w in points.windows(2) {
            if !(w[1].is_finite() && w[1] > w[0]) {
                return Err(Error::invalid(format!(
                    "time grid must be strictly increasing and finite (got {} after {})",
                    w[1], w[0]
                )));
            }
        }
        Ok(TimeGrid { points })
    }

    /// Uniform grid with `n` steps on `[0, horizon]` (so `n + 1` points).
    pub fn uniform(horizon: f64, n: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid("horizon must be positive and finite"));
        }
        if n == 0 {
            return Err(Error::invalid("need at least one step"));
        }
        let points = (0..=n).map(|k| horizon * k as f64 / n as f64).collect();
        TimeGrid::new(points)
    }

    /// The grid points, including the origin.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Number of grid points (including the origin).
    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Never true: a valid grid has at least two points.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Final time.
    pub fn horizon(&self) -> f64 {
        *self.points.last().unwrap()
    }

    /// Step `t_{k+1} - t_k`.
    pub fn step(&self, k: usize) -> f64 {
        self.points[k + 1] - self.points[k]
    }

    /// True when all steps are equal up to relative tolerance `1e-12`.
    pub fn is_uniform(&self) -> bool {
        let h0 = self.step(0);
        self.points
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h0).abs() <= 1e-12 * h0.max(1.0))
    }
}

/// A scalar function sampled on a [`TimeGrid`].
#[derive(Debug, Clone)]
pub struct GridFunction {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl GridFunction {
    /// Pairs a grid with nodal values (lengths must agree).
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::invalid(format!(
                "grid has {} points but {} values were supplied",
                grid.len(),
                values.len()
            )));
        }
        Ok(GridFunction { grid, values })
    }

    /// Samples a closure at each grid point.
    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.points().iter().map(|&t| f(t)).collect();
        GridFunction { grid, values }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Piecewise-linear interpolation; clamps outside the grid range.
    pub fn eval(&self, t: f64) -> f64 {
        let pts = self.grid.points();
        if t <= pts[0] {
            return self.values[0];
        }
        if t >= *pts.last().unwrap() {
            return *self.values.last().unwrap();
        }
        let j = match pts.binary_search_by(|p| p.partial_cmp(&t).unwrap()) {
            Ok(j) => return self.values[j],
            Err(j) => j, // first index with pts[j] > t; j >= 1 here
        };
        let (t0, t1) = (pts[j - 1], pts[j]);
        let w = (t - t0) / (t1 - t0);
        self.values[j - 1] * (1.0 - w) + self.values[j] * w
    }
}
