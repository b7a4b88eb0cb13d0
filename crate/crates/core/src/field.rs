//! Grid-sampled scalar and vector fields.

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Real scalar field sampled at the grid nodes, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    /// Zero field.
    pub fn zeros(grid: Grid) -> ScalarField {
        ScalarField {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    /// Constant field.
    pub fn constant(grid: Grid, value: f64) -> ScalarField {
        ScalarField {
            grid,
            values: vec![value; grid.len()],
        }
    }

    /// Sample `f(x, y)` at every node.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            let y = grid.node_y(j);
            for i in 0..grid.nx {
                values.push(f(grid.node_x(i), y));
            }
        }
        ScalarField { grid, values }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.values[self.grid.idx(i, j)]
    }

    /// Quadrature integral over the domain.
    pub fn integral(&self) -> f64 {
        let mut acc = 0.0;
        for j in 0..self.grid.ny {
            for i in 0..self.grid.nx {
                acc += self.at(i, j) * self.grid.quad_weight(i, j);
            }
        }
        acc
    }

    /// Quadrature mean (integral divided by domain area).
    pub fn mean(&self) -> f64 {
        self.integral() / self.grid.area()
    }

    /// Pointwise minimum.
    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Pointwise maximum.
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// True when every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// In-place `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &ScalarField) {
        debug_assert_eq!(self.grid, other.grid);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }

    /// In-place scaling.
    pub fn scale(&mut self, alpha: f64) {
        for v in &mut self.values {
            *v *= alpha;
        }
    }

    /// In-place constant shift.
    pub fn shift(&mut self, delta: f64) {
        for v in &mut self.values {
            *v += delta;
        }
    }

    /// New field `self - other`.
    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        let mut out = self.clone();
        out.add_scaled(-1.0, other);
        out
    }

    /// Pointwise product as a new field.
    pub fn pointwise_mul(&self, other: &ScalarField) -> ScalarField {
        debug_assert_eq!(self.grid, other.grid);
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .collect();
        ScalarField {
            grid: self.grid,
            values,
        }
    }

    /// Error unless both fields share one grid.
    pub fn require_same_grid(&self, other: &ScalarField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!(
                "{}x{} {:?} vs {}x{} {:?}",
                self.grid.nx,
                self.grid.ny,
                self.grid.domain,
                other.grid.nx,
                other.grid.ny,
                other.grid.domain
            )));
        }
        Ok(())
    }
}

/// Velocity-like field with one scalar component per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub x: ScalarField,
    pub y: ScalarField,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> VectorField {
        VectorField {
            x: ScalarField::zeros(grid),
            y: ScalarField::zeros(grid),
        }
    }

    /// Build from component closures.
    pub fn from_fns(
        grid: Grid,
        fx: impl Fn(f64, f64) -> f64,
        fy: impl Fn(f64, f64) -> f64,
    ) -> VectorField {
        VectorField {
            x: ScalarField::from_fn(grid, fx),
            y: ScalarField::from_fn(grid, fy),
        }
    }

    /// Components must share the same grid; returns it.
    pub fn grid(&self) -> Grid {
        debug_assert_eq!(self.x.grid, self.y.grid);
        self.x.grid
    }

    /// Grid maximum of the Euclidean speed.
    pub fn max_speed(&self) -> f64 {
        self.x
            .values
            .iter()
            .zip(&self.y.values)
            .map(|(a, b)| a.hypot(*b))
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// In-place `self += alpha * other`, both components.
    pub fn add_scaled(&mut self, alpha: f64, other: &VectorField) {
        self.x.add_scaled(alpha, &other.x);
        self.y.add_scaled(alpha, &other.y);
    }

    pub fn scale(&mut self, alpha: f64) {
        self.x.scale(alpha);
        self.y.scale(alpha);
    }

    /// New field `self - other`.
    pub fn sub(&self, other: &VectorField) -> VectorField {
        VectorField {
            x: self.x.sub(&other.x),
            y: self.y.sub(&other.y),
        }
    }
}
