//! Electric-potential solves `-Laplacian Phi = rho` on both domains.
//!
//! The torus solve inverts `|k|^2` per mode under the mean-zero gauge; the
//! square solve runs unpreconditioned conjugate gradients on the 5-point
//! Laplacian with constant boundary data.

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::grid::Domain;
use crate::{calculus, fdm, norms, spectral};

/// Relative neutrality gate on the charge mean for the periodic solve.
const NEUTRALITY_TOL: f64 = 1e-10;

/// Periodic solve: returns the unique mean-zero `Phi` with
/// `Phi_hat = rho_hat / |k|^2` per mode.
pub fn solve_poisson_periodic(rho: &ScalarField) -> Result<ScalarField> {
    rho.grid.require_torus()?;
    let mean = rho.mean();
    let bound = NEUTRALITY_TOL * (1.0 + norms::l2_norm(rho));
    if mean.abs() >= bound {
        return Err(Error::NonNeutralCharge {
            mean,
            bound,
        });
    }
    let mut spec = spectral::forward(rho)?;
    spec.apply_multiplier(|kx, ky| {
        let k2 = (kx * kx + ky * ky) as f64;
        if k2 == 0.0 {
            0.0
        } else {
            1.0 / k2
        }
    });
    Ok(spectral::inverse(&spec))
}

/// Dirichlet solve on the unit square with `Phi = gamma` on the boundary.
/// Conjugate gradients run to residual `1e-10 * ||rho||_L2` with an
/// iteration cap of `20 * max(nx, ny)`.
pub fn solve_poisson_dirichlet(rho: &ScalarField, gamma: f64) -> Result<ScalarField> {
    rho.grid.require_square()?;
    let g = rho.grid;
    let m = fdm::interior_len(g);
    let mut b = vec![0.0; m];
    fdm::pack_interior(rho, &mut b);

    // solution split Phi = gamma + w with w = 0 on the boundary; the
    // constant lift drops out of the interior stencil
    let op = fdm::InteriorHelmholtz {
        grid: g,
        alpha: 0.0,
        beta: 1.0,
    };
    let tol = 1e-10 * norms::l2_norm(rho);
    let cap = 20 * g.nx.max(g.ny);
    let mut w = vec![0.0; m];
    // DOF vectors carry no quadrature weights; rescale the target to match
    let tol_dof = tol / g.spacing_x();
    fdm::conjugate_gradient(|p, q| op.apply(p, q), &b, &mut w, None, tol_dof, cap)?;

    let mut phi = ScalarField::constant(g, gamma);
    let mut interior = ScalarField::zeros(g);
    fdm::unpack_interior(&w, &mut interior);
    phi.add_scaled(1.0, &interior);
    Ok(phi)
}

/// Potential solve dispatched on the domain.
pub fn solve_potential(rho: &ScalarField, gamma: f64) -> Result<ScalarField> {
    match rho.grid.domain {
        Domain::Torus2Pi => solve_poisson_periodic(rho),
        Domain::UnitSquareDirichlet => solve_poisson_dirichlet(rho, gamma),
    }
}

/// Gradient of the potential; one-sided stencils at the square boundary.
pub fn grad_potential(phi: &ScalarField) -> Result<VectorField> {
    calculus::gradient(phi)
}
