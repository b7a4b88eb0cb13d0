//! Lebesgue norms, Sobolev seminorms, and inner products under the grid
//! quadrature rule (equal-weight on the torus, trapezoid on the square).

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::grid::Domain;
use crate::spectral;

/// `L^p` norm for `p in [1, inf]`; `p = inf` is the grid maximum of `|f|`.
pub fn lp_norm(f: &ScalarField, p: f64) -> Result<f64> {
    if p < 1.0 {
        return Err(Error::InvalidArgument(format!("lp_norm needs p >= 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(f.values.iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    let mut acc = 0.0;
    for j in 0..f.grid.ny {
        for i in 0..f.grid.nx {
            acc += f.at(i, j).abs().powf(p) * f.grid.quad_weight(i, j);
        }
    }
    Ok(acc.powf(1.0 / p))
}

/// `L^2` norm (the common case, kept allocation-free).
pub fn l2_norm(f: &ScalarField) -> f64 {
    l2_inner(f, f).sqrt()
}

/// `L^2` inner product under the grid quadrature.
pub fn l2_inner(a: &ScalarField, b: &ScalarField) -> f64 {
    debug_assert_eq!(a.grid, b.grid);
    let mut acc = 0.0;
    for j in 0..a.grid.ny {
        for i in 0..a.grid.nx {
            acc += a.at(i, j) * b.at(i, j) * a.grid.quad_weight(i, j);
        }
    }
    acc
}

/// `L^2` norm of a vector field, components summed in quadrature.
pub fn l2_norm_vec(v: &VectorField) -> f64 {
    (l2_inner(&v.x, &v.x) + l2_inner(&v.y, &v.y)).sqrt()
}

/// `L^2` inner product of vector fields.
pub fn l2_inner_vec(a: &VectorField, b: &VectorField) -> f64 {
    l2_inner(&a.x, &b.x) + l2_inner(&a.y, &b.y)
}

/// `L^p` norm of the pointwise Euclidean magnitude of a vector field.
pub fn lp_norm_vec(v: &VectorField, p: f64) -> Result<f64> {
    if p < 1.0 {
        return Err(Error::InvalidArgument(format!("lp_norm needs p >= 1, got {p}")));
    }
    let g = v.grid();
    if p.is_infinite() {
        return Ok(v.max_speed());
    }
    let mut acc = 0.0;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let m = v.x.at(i, j).hypot(v.y.at(i, j));
            acc += m.powf(p) * g.quad_weight(i, j);
        }
    }
    Ok(acc.powf(1.0 / p))
}

/// Homogeneous Sobolev seminorm `||Lambda^k f||_{L^2}` of integer order.
///
/// On the torus this is exact per mode. On the square only `k = 1`
/// (centered-difference gradient) and `k = 2` (5-point Laplacian) are
/// defined, measured over interior nodes.
pub fn h_seminorm(f: &ScalarField, k: u32) -> Result<f64> {
    match f.grid.domain {
        Domain::Torus2Pi => {
            if k == 0 {
                return Ok(l2_norm(f));
            }
            let mut spec = spectral::forward(f)?;
            spec.apply_multiplier(|kx, ky| {
                ((kx * kx + ky * ky) as f64).powf(k as f64 / 2.0)
            });
            // mean maps to zero for k >= 1 automatically (multiplier 0^k)
            Ok(spec.parseval_l2_sq().sqrt())
        }
        Domain::UnitSquareDirichlet => match k {
            0 => Ok(l2_norm(f)),
            1 => {
                let grad = crate::calculus::gradient(f)?;
                Ok(l2_norm_vec(&grad))
            }
            2 => {
                let g = f.grid;
                let (hx, hy) = (g.spacing_x(), g.spacing_y());
                let mut acc = 0.0;
                for j in 1..g.ny - 1 {
                    for i in 1..g.nx - 1 {
                        let lap = (f.at(i + 1, j) - 2.0 * f.at(i, j) + f.at(i - 1, j))
                            / (hx * hx)
                            + (f.at(i, j + 1) - 2.0 * f.at(i, j) + f.at(i, j - 1)) / (hy * hy);
                        acc += lap * lap * g.quad_weight(i, j);
                    }
                }
                Ok(acc.sqrt())
            }
            _ => Err(Error::InvalidArgument(format!(
                "square-domain h_seminorm supports orders 0..2, got {k}"
            ))),
        },
    }
}

/// `H^1` norm squared of a vector field: `||v||^2 + ||Lambda v||^2`.
pub fn h1_norm_sq_vec(v: &VectorField) -> Result<f64> {
    let a = l2_norm_vec(v);
    let bx = h_seminorm(&v.x, 1)?;
    let by = h_seminorm(&v.y, 1)?;
    Ok(a * a + bx * bx + by * by)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn l2_of_unit_constant_is_two_pi() {
        let g = Grid::torus(16, 16).unwrap();
        let f = ScalarField::constant(g, 1.0);
        let n = lp_norm(&f, 2.0).unwrap();
        assert!((n - 2.0 * std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn l2_of_cosine_is_sqrt_two_pi_sq() {
        let g = Grid::torus(32, 32).unwrap();
        let f = ScalarField::from_fn(g, |x, _| x.cos());
        let n = lp_norm(&f, 2.0).unwrap();
        let expect = (2.0 * std::f64::consts::PI * std::f64::consts::PI).sqrt();
        assert!((n - expect).abs() < 1e-12);
    }

    #[test]
    fn zero_field_has_zero_norms() {
        let g = Grid::torus(8, 8).unwrap();
        let f = ScalarField::zeros(g);
        for p in [1.0, 2.0, 4.0, f64::INFINITY] {
            assert_eq!(lp_norm(&f, p).unwrap(), 0.0);
        }
    }

    #[test]
    fn rejects_p_below_one() {
        let g = Grid::torus(8, 8).unwrap();
        let f = ScalarField::zeros(g);
        assert!(lp_norm(&f, 0.5).is_err());
    }

    #[test]
    fn h1_seminorm_of_single_mode() {
        let g = Grid::torus(16, 16).unwrap();
        let f = ScalarField::from_fn(g, |_, y| (2.0 * y).sin());
        // Lambda^1 multiplies by |k| = 2, so the seminorm is 2 ||f||_L2
        let s = h_seminorm(&f, 1).unwrap();
        assert!((s - 2.0 * l2_norm(&f)).abs() < 1e-10);
    }

    #[test]
    fn square_h2_matches_eigenfunction() {
        let g = Grid::square(64, 64).unwrap();
        let pi = std::f64::consts::PI;
        let f = ScalarField::from_fn(g, |x, y| (pi * x).sin() * (pi * y).sin());
        // 5-point Laplacian of the sampled eigenvector scales it by
        // lambda_h = (4/h^2) sin^2(pi h/2) per axis
        let h = g.spacing();
        let lam = (8.0 / (h * h)) * (pi * h / 2.0).sin().powi(2);
        let s2 = h_seminorm(&f, 2).unwrap();
        // compare against lambda_h * ||f||_L2 restricted to the interior;
        // boundary rows carry zero weight for this eigenfunction
        let rel = (s2 - lam * l2_norm(&f)).abs() / (lam * l2_norm(&f));
        assert!(rel < 1e-10, "rel {rel:.3e}");
    }
}
