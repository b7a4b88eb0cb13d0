//! Differential operators dispatched on the domain kind: exact per-mode
//! spectral calculus on the torus, second-order differences on the square.

use crate::error::Result;
use crate::field::{ScalarField, VectorField};
use crate::grid::Domain;
use crate::{fdm, spectral};

/// Gradient of a scalar field.
pub fn gradient(f: &ScalarField) -> Result<VectorField> {
    match f.grid.domain {
        Domain::Torus2Pi => spectral::gradient(f),
        Domain::UnitSquareDirichlet => Ok(fdm::gradient(f)),
    }
}

/// Divergence of a vector field.
pub fn divergence(v: &VectorField) -> Result<ScalarField> {
    match v.grid().domain {
        Domain::Torus2Pi => spectral::divergence(v),
        Domain::UnitSquareDirichlet => Ok(fdm::divergence(v)),
    }
}

/// Advection term `u . grad f`. On the torus the product is dealiased so
/// that the skew-symmetry `<u . grad f, f> = 0` holds to round-off for
/// divergence-free `u` and band-limited `f`.
pub fn advect(u: &VectorField, f: &ScalarField) -> Result<ScalarField> {
    u.x.require_same_grid(f)?;
    match f.grid.domain {
        Domain::Torus2Pi => {
            let spec = spectral::forward(f)?;
            let gx = spectral::inverse(&spectral::deriv_x(&spec));
            let gy = spectral::inverse(&spectral::deriv_y(&spec));
            let mut raw = u.x.pointwise_mul(&gx);
            let term_y = u.y.pointwise_mul(&gy);
            raw.add_scaled(1.0, &term_y);
            let mut out = spectral::forward(&raw)?;
            spectral::dealias(&mut out);
            Ok(spectral::inverse(&out))
        }
        Domain::UnitSquareDirichlet => {
            let grad = fdm::gradient(f);
            let mut out = u.x.pointwise_mul(&grad.x);
            let term_y = u.y.pointwise_mul(&grad.y);
            out.add_scaled(1.0, &term_y);
            Ok(out)
        }
    }
}
