//! Uniform 2-D node grids and scalar fields sampled on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform node grid including the boundary nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Grid2D {
    pub const MIN_NODES: usize = 16;

    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, nx: usize, ny: usize) -> Result<Self> {
        let g = Self {
            x_min,
            x_max,
            y_min,
            y_max,
            nx,
            ny,
        };
        g.validate()?;
        Ok(g)
    }

    /// Square grid `[-half_width, half_width]²` with `n` nodes per side.
    pub fn square(half_width: f64, n: usize) -> Result<Self> {
        Self::new(-half_width, half_width, -half_width, half_width, n, n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_min < self.x_max && self.y_min < self.y_max) {
            return Err(Error::InvalidInput("grid bounds must be increasing".into()));
        }
        if self.nx < Self::MIN_NODES || self.ny < Self::MIN_NODES {
            return Err(Error::InvalidInput(format!(
                "grid needs at least {} nodes per side, got {}x{}",
                Self::MIN_NODES,
                self.nx,
                self.ny
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    #[inline]
    pub fn dy(&self) -> f64 {
        (self.y_max - self.y_min) / (self.ny - 1) as f64
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        self.y_min + j as f64 * self.dy()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same extent with every side refined to `2n - 1` nodes, so old nodes stay nodes.
    pub fn refined(&self) -> Self {
        Self {
            nx: 2 * self.nx - 1,
            ny: 2 * self.ny - 1,
            ..*self
        }
    }

    /// Nearest node strictly inside the boundary, or an error if `(x, y)` is not interior.
    pub fn nearest_interior_node(&self, x: f64, y: f64) -> Result<(usize, usize)> {
        let fi = (x - self.x_min) / self.dx();
        let fj = (y - self.y_min) / self.dy();
        let (i, j) = (fi.round(), fj.round());
        if !(fi.is_finite() && fj.is_finite())
            || i < 1.0
            || j < 1.0
            || i > (self.nx - 2) as f64
            || j > (self.ny - 2) as f64
        {
            return Err(Error::OutsideGrid { x, y });
        }
        Ok((i as usize, j as usize))
    }

    /// Whether x and y extents coincide, so (i, j) -> (j, i) is a node symmetry.
    pub fn is_symmetric(&self) -> bool {
        self.nx == self.ny && self.x_min == self.y_min && self.x_max == self.y_max
    }
}

/// Real field sampled on every node of a grid, stored x-major (`values[i * ny + j]`).
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField2D {
    pub grid: Grid2D,
    pub values: Vec<f64>,
}

impl ScalarField2D {
    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.nx {
            let x = grid.x(i);
            for j in 0..grid.ny {
                values.push(f(x, grid.y(j)));
            }
        }
        Self { grid, values }
    }

    pub fn from_values(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Discrete L² norm `sqrt(Σ v² dx dy)`.
    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.values.iter().map(|v| v * v).sum();
        (s * self.grid.dx() * self.grid.dy()).sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    /// Node index of the maximum value.
    pub fn argmax(&self) -> (usize, usize) {
        let k = self
            .values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc })
            .0;
        (k / self.grid.ny, k % self.grid.ny)
    }

    /// Iterate `(x, y, value)` in storage order.
    pub fn iter_nodes(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (0..self.grid.nx).flat_map(move |i| {
            (0..self.grid.ny).map(move |j| (self.grid.x(i), self.grid.y(j), self.at(i, j)))
        })
    }
}
