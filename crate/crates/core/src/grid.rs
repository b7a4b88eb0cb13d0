//! Uniform grids on the periodic box `[0, 2*pi)^2` and the closed unit square.
//!
//! Torus grids carry integer wavenumbers and equal-weight quadrature; square
//! grids include their boundary nodes and use trapezoid quadrature. Row-major
//! storage throughout: index `j * nx + i` holds the node `(x_i, y_j)`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Domain kind a grid discretizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    /// Periodic box of side `2*pi`; nodes at `2*pi*i/nx`, no duplicated seam.
    Torus2Pi,
    /// Closed unit square; nodes at `i/(nx-1)` including both boundaries.
    UnitSquareDirichlet,
}

/// Uniform structured grid. Cheap to copy; fields borrow nothing from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub domain: Domain,
}

/// Sizes admitted for fast trigonometric transforms: 2^a * 3^b * 5^c.
fn is_smooth(mut n: usize) -> bool {
    for p in [2, 3, 5] {
        while n % p == 0 {
            n /= p;
        }
    }
    n == 1
}

impl Grid {
    /// Periodic grid. Sizes must be even, at least 8, and 2/3/5-smooth.
    pub fn torus(nx: usize, ny: usize) -> Result<Grid> {
        Self::check_size(nx, ny)?;
        if !is_smooth(nx) || !is_smooth(ny) {
            return Err(Error::BadGridSize {
                nx,
                ny,
                reason: "torus sizes must factor into 2, 3, 5 for the fast transform".into(),
            });
        }
        Ok(Grid {
            nx,
            ny,
            domain: Domain::Torus2Pi,
        })
    }

    /// Unit-square grid with boundary nodes. Sizes must be even, at least 8.
    pub fn square(nx: usize, ny: usize) -> Result<Grid> {
        Self::check_size(nx, ny)?;
        Ok(Grid {
            nx,
            ny,
            domain: Domain::UnitSquareDirichlet,
        })
    }

    fn check_size(nx: usize, ny: usize) -> Result<()> {
        if nx < 8 || ny < 8 || nx % 2 != 0 || ny % 2 != 0 {
            return Err(Error::BadGridSize {
                nx,
                ny,
                reason: "grid sizes must be even and at least 8".into(),
            });
        }
        Ok(())
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Node spacing along x.
    pub fn spacing_x(&self) -> f64 {
        match self.domain {
            Domain::Torus2Pi => 2.0 * std::f64::consts::PI / self.nx as f64,
            Domain::UnitSquareDirichlet => 1.0 / (self.nx as f64 - 1.0),
        }
    }

    /// Node spacing along y.
    pub fn spacing_y(&self) -> f64 {
        match self.domain {
            Domain::Torus2Pi => 2.0 * std::f64::consts::PI / self.ny as f64,
            Domain::UnitSquareDirichlet => 1.0 / (self.ny as f64 - 1.0),
        }
    }

    /// Spacing along x, shared by both axes whenever `nx == ny`.
    pub fn spacing(&self) -> f64 {
        self.spacing_x()
    }

    /// Row-major storage index of node `(i, j)`.
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// x-coordinate of column `i`.
    #[inline]
    pub fn node_x(&self, i: usize) -> f64 {
        i as f64 * self.spacing_x()
    }

    /// y-coordinate of row `j`.
    #[inline]
    pub fn node_y(&self, j: usize) -> f64 {
        j as f64 * self.spacing_y()
    }

    /// True for nodes on the square boundary; always false on the torus.
    #[inline]
    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        match self.domain {
            Domain::Torus2Pi => false,
            Domain::UnitSquareDirichlet => {
                i == 0 || j == 0 || i == self.nx - 1 || j == self.ny - 1
            }
        }
    }

    /// Quadrature weight of node `(i, j)`: equal-weight on the torus,
    /// trapezoid (half weights on faces, quarter on corners) on the square.
    pub fn quad_weight(&self, i: usize, j: usize) -> f64 {
        let hx = self.spacing_x();
        let hy = self.spacing_y();
        match self.domain {
            Domain::Torus2Pi => hx * hy,
            Domain::UnitSquareDirichlet => {
                let wx = if i == 0 || i == self.nx - 1 { 0.5 } else { 1.0 };
                let wy = if j == 0 || j == self.ny - 1 { 0.5 } else { 1.0 };
                wx * wy * hx * hy
            }
        }
    }

    /// Total domain area under the grid quadrature.
    pub fn area(&self) -> f64 {
        match self.domain {
            Domain::Torus2Pi => 4.0 * std::f64::consts::PI * std::f64::consts::PI,
            Domain::UnitSquareDirichlet => 1.0,
        }
    }

    /// Error unless the grid is periodic.
    pub fn require_torus(&self) -> Result<()> {
        if self.domain != Domain::Torus2Pi {
            return Err(Error::DomainMismatch {
                required: Domain::Torus2Pi,
                found: self.domain,
            });
        }
        Ok(())
    }

    /// Error unless the grid is the unit square.
    pub fn require_square(&self) -> Result<()> {
        if self.domain != Domain::UnitSquareDirichlet {
            return Err(Error::DomainMismatch {
                required: Domain::UnitSquareDirichlet,
                found: self.domain,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_odd_and_tiny_sizes() {
        assert!(Grid::torus(7, 8).is_err());
        assert!(Grid::torus(8, 6).is_err());
        assert!(Grid::square(9, 16).is_err());
        assert!(Grid::torus(8, 8).is_ok());
    }

    #[test]
    fn rejects_non_smooth_torus_sizes() {
        assert!(Grid::torus(14, 14).is_err()); // factor 7
        assert!(Grid::torus(48, 48).is_ok());
        assert!(Grid::torus(60, 60).is_ok()); // 2^2 * 3 * 5
        assert!(Grid::square(14, 14).is_ok()); // no transform on the square
    }

    #[test]
    fn spacing_matches_domain_convention() {
        let t = Grid::torus(16, 16).unwrap();
        assert!((t.spacing() - std::f64::consts::PI / 8.0).abs() < 1e-15);
        let s = Grid::square(16, 16).unwrap();
        assert!((s.spacing() - 1.0 / 15.0).abs() < 1e-15);
    }

    #[test]
    fn trapezoid_weights_sum_to_area() {
        let s = Grid::square(12, 16).unwrap();
        let total: f64 = (0..s.ny)
            .flat_map(|j| (0..s.nx).map(move |i| (i, j)))
            .map(|(i, j)| s.quad_weight(i, j))
            .sum();
        assert!((total - 1.0).abs() < 1e-12);

        let t = Grid::torus(12, 16).unwrap();
        let total: f64 = (0..t.ny)
            .flat_map(|j| (0..t.nx).map(move |i| (i, j)))
            .map(|(i, j)| t.quad_weight(i, j))
            .sum();
        assert!((total - t.area()).abs() < 1e-10);
    }
}
