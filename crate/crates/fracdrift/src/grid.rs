//! Time grids, sample paths and ensembles of independent copies.

use crate::error::{Error, Result};

/// Uniform dissection of `[0, T]` into `n` steps, with nodes `t_l = l T / n`.
///
/// Estimation conventions place the first observation at `t_1 = T/n`, so that
/// drift functions and quadratic-variation densities singular at the origin
/// are never evaluated at `t = 0`; [`TimeGrid::first_observation`] exposes
/// that left endpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::Domain("step count must be positive".into()));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Step width `T / n`.
    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Node `t_l`; `node(0) = 0` and `node(n) = T` exactly.
    pub fn node(&self, l: usize) -> f64 {
        debug_assert!(l <= self.steps);
        (l as f64 / self.steps as f64) * self.horizon
    }

    /// First observation time `t_1 = T/n`.
    pub fn first_observation(&self) -> f64 {
        self.node(1)
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(move |l| self.node(l))
    }
}

/// Discretely observed path on a [`TimeGrid`]: `n + 1` finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl SamplePath {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.steps() + 1 {
            return Err(Error::Dimension(format!(
                "path has {} values, grid expects {}",
                values.len(),
                grid.steps() + 1
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite path value {v}")));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, l: usize) -> f64 {
        self.values[l]
    }

    /// Successive increments `x_{t_{l+1}} - x_{t_l}`.
    pub fn increments(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.windows(2).map(|w| w[1] - w[0])
    }
}

/// `N >= 1` sample paths sharing one grid.
#[derive(Debug, Clone)]
pub struct Ensemble {
    grid: TimeGrid,
    paths: Vec<SamplePath>,
}

impl Ensemble {
    pub fn new(paths: Vec<SamplePath>) -> Result<Self> {
        let Some(first) = paths.first() else {
            return Err(Error::Dimension("ensemble needs at least one path".into()));
        };
        let grid = first.grid();
        if paths.iter().any(|p| p.grid() != grid) {
            return Err(Error::Dimension("all ensemble paths must share one grid".into()));
        }
        Ok(Self { grid, paths })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    /// Number of copies `N`.
    pub fn n_copies(&self) -> usize {
        self.paths.len()
    }

    pub fn paths(&self) -> &[SamplePath] {
        &self.paths
    }

    pub fn path(&self, i: usize) -> &SamplePath {
        &self.paths[i]
    }
}
