//! Second-order finite differences and a conjugate-gradient kernel for the
//! unit square. Interior stencils are centered; boundary derivatives use the
//! second-order one-sided closure `(-3 f0 + 4 f1 - f2) / (2h)`.

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::grid::Grid;

/// Centered-difference gradient with one-sided boundary closure.
pub fn gradient(f: &ScalarField) -> VectorField {
    let g = f.grid;
    let (hx, hy) = (g.spacing_x(), g.spacing_y());
    let mut gx = ScalarField::zeros(g);
    let mut gy = ScalarField::zeros(g);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let dx = if i == 0 {
                (-3.0 * f.at(0, j) + 4.0 * f.at(1, j) - f.at(2, j)) / (2.0 * hx)
            } else if i == g.nx - 1 {
                (3.0 * f.at(i, j) - 4.0 * f.at(i - 1, j) + f.at(i - 2, j)) / (2.0 * hx)
            } else {
                (f.at(i + 1, j) - f.at(i - 1, j)) / (2.0 * hx)
            };
            let dy = if j == 0 {
                (-3.0 * f.at(i, 0) + 4.0 * f.at(i, 1) - f.at(i, 2)) / (2.0 * hy)
            } else if j == g.ny - 1 {
                (3.0 * f.at(i, j) - 4.0 * f.at(i, j - 1) + f.at(i, j - 2)) / (2.0 * hy)
            } else {
                (f.at(i, j + 1) - f.at(i, j - 1)) / (2.0 * hy)
            };
            *gx.at_mut(i, j) = dx;
            *gy.at_mut(i, j) = dy;
        }
    }
    VectorField { x: gx, y: gy }
}

/// Divergence with the same stencils as [`gradient`].
pub fn divergence(v: &VectorField) -> ScalarField {
    let gx = gradient(&v.x);
    let gy = gradient(&v.y);
    let mut out = gx.x;
    out.add_scaled(1.0, &gy.y);
    out
}

/// 5-point Laplacian at interior nodes; boundary rows are left zero.
pub fn laplacian5(f: &ScalarField) -> ScalarField {
    let g = f.grid;
    let (hx2, hy2) = (g.spacing_x().powi(2), g.spacing_y().powi(2));
    let mut out = ScalarField::zeros(g);
    for j in 1..g.ny - 1 {
        for i in 1..g.nx - 1 {
            *out.at_mut(i, j) = (f.at(i + 1, j) - 2.0 * f.at(i, j) + f.at(i - 1, j)) / hx2
                + (f.at(i, j + 1) - 2.0 * f.at(i, j) + f.at(i, j - 1)) / hy2;
        }
    }
    out
}

/// Convergence report of a conjugate-gradient solve.
#[derive(Debug, Clone, Copy)]
pub struct CgReport {
    pub iterations: usize,
    pub residual: f64,
}

/// Conjugate gradients for an operator that is self-adjoint and positive
/// definite in the (optionally weighted) inner product. `x` carries the
/// initial guess and receives the solution. Converges when the weighted
/// residual norm drops below `tol`.
pub fn conjugate_gradient(
    apply_a: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    weights: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<CgReport> {
    let n = b.len();
    let dot = |a: &[f64], c: &[f64]| -> f64 {
        match weights {
            Some(w) => a.iter().zip(c).zip(w).map(|((p, q), wi)| p * q * wi).sum(),
            None => a.iter().zip(c).map(|(p, q)| p * q).sum(),
        }
    };

    let mut ax = vec![0.0; n];
    apply_a(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    if rr.sqrt() <= tol {
        return Ok(CgReport {
            iterations: 0,
            residual: rr.sqrt(),
        });
    }
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        apply_a(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::SolverStalled {
                iterations: it,
                residual: rr.sqrt(),
                tolerance: tol,
            });
        }
        let alpha = rr / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= tol {
            return Ok(CgReport {
                iterations: it,
                residual: rr_new.sqrt(),
            });
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for k in 0..n {
            p[k] = r[k] + beta * p[k];
        }
    }
    Err(Error::SolverStalled {
        iterations: max_iter,
        residual: rr.sqrt(),
        tolerance: tol,
    })
}

/// Number of interior nodes of a square grid.
pub fn interior_len(g: Grid) -> usize {
    (g.nx - 2) * (g.ny - 2)
}

/// Copy interior node values into a packed DOF vector.
pub fn pack_interior(f: &ScalarField, out: &mut [f64]) {
    let g = f.grid;
    let mut k = 0;
    for j in 1..g.ny - 1 {
        for i in 1..g.nx - 1 {
            out[k] = f.at(i, j);
            k += 1;
        }
    }
}

/// Scatter a packed interior DOF vector back into a field; boundary nodes
/// are not touched.
pub fn unpack_interior(dofs: &[f64], f: &mut ScalarField) {
    let g = f.grid;
    let mut k = 0;
    for j in 1..g.ny - 1 {
        for i in 1..g.nx - 1 {
            *f.at_mut(i, j) = dofs[k];
            k += 1;
        }
    }
}

/// Apply `alpha * I - beta * Laplacian_h` on packed interior DOFs with
/// homogeneous Dirichlet boundary (missing neighbors read as zero).
pub struct InteriorHelmholtz {
    pub grid: Grid,
    pub alpha: f64,
    pub beta: f64,
}

impl InteriorHelmholtz {
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let g = self.grid;
        let (mx, my) = (g.nx - 2, g.ny - 2);
        let (hx2, hy2) = (g.spacing_x().powi(2), g.spacing_y().powi(2));
        let at = |x: &[f64], i: isize, j: isize| -> f64 {
            if i < 0 || j < 0 || i >= mx as isize || j >= my as isize {
                0.0
            } else {
                x[j as usize * mx + i as usize]
            }
        };
        for j in 0..my {
            for i in 0..mx {
                let c = x[j * mx + i];
                let lap = (at(x, i as isize + 1, j as isize) - 2.0 * c
                    + at(x, i as isize - 1, j as isize))
                    / hx2
                    + (at(x, i as isize, j as isize + 1) - 2.0 * c
                        + at(x, i as isize, j as isize - 1))
                        / hy2;
                y[j * mx + i] = self.alpha * c - self.beta * lap;
            }
        }
    }
}
