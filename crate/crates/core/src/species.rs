//! Ionic species parameters and boundary conditions.

use crate::error::{Error, Result};
use crate::grid::Domain;
use serde::{Deserialize, Serialize};

/// Boundary condition attached to one species.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BoundaryKind {
    /// Torus: no boundary; the species mean is conserved.
    Periodic,
    /// Fixed trace `c = gamma` on the walls.
    Dirichlet { gamma: f64 },
    /// Zero total normal flux `(grad c + z c grad Phi) . n = 0`; the species
    /// mean is conserved.
    Blocking,
}

/// Diffusivity, valence, and boundary condition of one species.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeciesParams {
    pub diffusivity: f64,
    pub valence: f64,
    pub bc: BoundaryKind,
}

impl SpeciesParams {
    pub fn periodic(diffusivity: f64, valence: f64) -> SpeciesParams {
        SpeciesParams {
            diffusivity,
            valence,
            bc: BoundaryKind::Periodic,
        }
    }

    pub fn dirichlet(diffusivity: f64, valence: f64, gamma: f64) -> SpeciesParams {
        SpeciesParams {
            diffusivity,
            valence,
            bc: BoundaryKind::Dirichlet { gamma },
        }
    }

    pub fn blocking(diffusivity: f64, valence: f64) -> SpeciesParams {
        SpeciesParams {
            diffusivity,
            valence,
            bc: BoundaryKind::Blocking,
        }
    }

    /// Checks that the diffusivity is positive and the boundary condition is
    /// admissible on `domain`.
    pub fn validate(&self, domain: Domain) -> Result<()> {
        if !(self.diffusivity > 0.0) || !self.diffusivity.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "species diffusivity must be positive and finite, got {}",
                self.diffusivity
            )));
        }
        if !self.valence.is_finite() {
            return Err(Error::InvalidArgument("species valence must be finite".into()));
        }
        match (domain, self.bc) {
            (Domain::Torus2Pi, BoundaryKind::Periodic) => Ok(()),
            (Domain::Torus2Pi, _) => Err(Error::InvalidArgument(
                "wall boundary conditions are not available on the torus".into(),
            )),
            (Domain::UnitSquareDirichlet, BoundaryKind::Periodic) => Err(Error::InvalidArgument(
                "periodic species are not available on the bounded square".into(),
            )),
            (Domain::UnitSquareDirichlet, BoundaryKind::Dirichlet { gamma }) => {
                if gamma >= 0.0 && gamma.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument(format!(
                        "Dirichlet concentration trace must be nonnegative, got {gamma}"
                    )))
                }
            }
            (Domain::UnitSquareDirichlet, BoundaryKind::Blocking) => Ok(()),
        }
    }
}

/// Validates a species list against a domain. At least one species is
/// required; valences may be arbitrary signed reals.
pub fn validate_species(params: &[SpeciesParams], domain: Domain) -> Result<()> {
    if params.is_empty() {
        return Err(Error::InvalidArgument("at least one species is required".into()));
    }
    for p in params {
        p.validate(domain)?;
    }
    Ok(())
}
