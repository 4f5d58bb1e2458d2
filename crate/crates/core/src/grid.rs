//! Uniform grids and piecewise-linear grid functions on an interval.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("interval [{a}, {b}] is empty or inverted")]
    BadInterval { a: f64, b: f64 },
    #[error("grid needs at least 4 cells, got {0}")]
    TooFewCells(usize),
    #[error("expected {expected} nodal values, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("Dirichlet grid function must vanish at both end nodes")]
    NonzeroBoundary,
}

/// Uniform grid `a = x_0 < ... < x_N = b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub a: f64,
    pub b: f64,
    pub cells: usize,
}

impl Grid {
    pub fn new(a: f64, b: f64, cells: usize) -> Result<Self, GridError> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(GridError::BadInterval { a, b });
        }
        if cells < 4 {
            return Err(GridError::TooFewCells(cells));
        }
        Ok(Grid { a, b, cells })
    }

    pub fn h(&self) -> f64 {
        (self.b - self.a) / self.cells as f64
    }

    pub fn len(&self) -> f64 {
        self.b - self.a
    }

    pub fn node_count(&self) -> usize {
        self.cells + 1
    }

    pub fn interior_count(&self) -> usize {
        self.cells - 1
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.cells {
            self.b
        } else {
            self.a + i as f64 * self.h()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.cells).map(|i| self.node(i)).collect()
    }

    /// Point at local coordinate `t ∈ [0, 1]` of cell `cell`.
    pub fn point(&self, cell: usize, t: f64) -> f64 {
        self.a + (cell as f64 + t) * self.h()
    }

    /// Cell index and local coordinate of `x` (clamped to the grid).
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let s = ((x - self.a) / self.h()).clamp(0.0, self.cells as f64);
        let cell = (s.floor() as usize).min(self.cells - 1);
        (cell, s - cell as f64)
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.a + self.b)
    }
}

/// Piecewise-linear function on a [`Grid`], zero outside `[a, b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub dirichlet: bool,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>, dirichlet: bool) -> Result<Self, GridError> {
        if values.len() != grid.node_count() {
            return Err(GridError::LengthMismatch {
                expected: grid.node_count(),
                found: values.len(),
            });
        }
        if dirichlet && (values[0] != 0.0 || values[grid.cells] != 0.0) {
            return Err(GridError::NonzeroBoundary);
        }
        Ok(GridFunction {
            grid,
            values,
            dirichlet,
        })
    }

    pub fn zeros(grid: Grid) -> Self {
        GridFunction {
            grid,
            values: vec![0.0; grid.node_count()],
            dirichlet: true,
        }
    }

    /// Sample `f` at the nodes. With `dirichlet`, the end values are forced to 0.
    pub fn from_fn(grid: Grid, dirichlet: bool, f: impl Fn(f64) -> f64) -> Self {
        let mut values: Vec<f64> = grid.nodes().into_iter().map(f).collect();
        if dirichlet {
            values[0] = 0.0;
            values[grid.cells] = 0.0;
        }
        GridFunction {
            grid,
            values,
            dirichlet,
        }
    }

    /// Dirichlet function from its interior nodal values.
    pub fn from_interior(grid: Grid, interior: &[f64]) -> Result<Self, GridError> {
        if interior.len() != grid.interior_count() {
            return Err(GridError::LengthMismatch {
                expected: grid.interior_count(),
                found: interior.len(),
            });
        }
        let mut values = Vec::with_capacity(grid.node_count());
        values.push(0.0);
        values.extend_from_slice(interior);
        values.push(0.0);
        Ok(GridFunction {
            grid,
            values,
            dirichlet: true,
        })
    }

    pub fn interior(&self) -> &[f64] {
        &self.values[1..self.grid.cells]
    }

    /// Value of the interpolant; zero outside the grid interval.
    pub fn eval(&self, x: f64) -> f64 {
        if x < self.grid.a || x > self.grid.b {
            return 0.0;
        }
        let (cell, t) = self.grid.locate(x);
        self.at(cell, t)
    }

    #[inline]
    pub fn at(&self, cell: usize, t: f64) -> f64 {
        self.values[cell] + t * (self.values[cell + 1] - self.values[cell])
    }

    pub fn scaled(&self, c: f64) -> Self {
        GridFunction {
            grid: self.grid,
            values: self.values.iter().map(|v| c * v).collect(),
            dirichlet: self.dirichlet,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `self + c * other` on a shared grid.
    pub fn axpy(&self, c: f64, other: &GridFunction) -> Self {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        GridFunction {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + c * b)
                .collect(),
            dirichlet: self.dirichlet && other.dirichlet,
        }
    }

    /// Exact L² norm of the piecewise-linear interpolant.
    pub fn l2_norm(&self) -> f64 {
        let h = self.grid.h();
        self.values
            .windows(2)
            .map(|w| h * (w[0] * w[0] + w[0] * w[1] + w[1] * w[1]) / 3.0)
            .sum::<f64>()
            .sqrt()
    }

    /// L² distance to `other`, which must share the grid.
    pub fn l2_distance(&self, other: &GridFunction) -> f64 {
        self.axpy(-1.0, other).l2_norm()
    }

    /// Mirror image about the midpoint of the interval.
    pub fn mirrored(&self) -> Self {
        let mut values = self.values.clone();
        values.reverse();
        GridFunction {
            grid: self.grid,
            values,
            dirichlet: self.dirichlet,
        }
    }
}

/// Hat of height 1 centred at `center` with half-width `half_width`.
pub fn hat(grid: Grid, center: f64, half_width: f64) -> GridFunction {
    GridFunction::from_fn(grid, true, |x| (1.0 - (x - center).abs() / half_width).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(1.0, 0.0, 8).is_err());
        assert!(Grid::new(0.0, 1.0, 3).is_err());
        let g = Grid::new(0.0, 1.0, 8).unwrap();
        assert!(GridFunction::new(g, vec![1.0; 9], true).is_err());
        assert!(GridFunction::new(g, vec![1.0; 8], false).is_err());
    }

    #[test]
    fn interpolation_and_locate() {
        let g = Grid::new(0.0, 1.0, 4).unwrap();
        let u = GridFunction::from_fn(g, false, |x| 2.0 * x + 1.0);
        for x in [0.0, 0.1, 0.5, 0.77, 1.0] {
            assert!((u.eval(x) - (2.0 * x + 1.0)).abs() < 1e-14);
        }
        assert_eq!(u.eval(1.5), 0.0);
        assert_eq!(g.node(4), 1.0);
    }

    #[test]
    fn l2_norm_of_linear_function() {
        let g = Grid::new(0.0, 1.0, 16).unwrap();
        let u = GridFunction::from_fn(g, false, |x| x);
        assert!((u.l2_norm() - (1.0f64 / 3.0).sqrt()).abs() < 1e-14);
    }
}
