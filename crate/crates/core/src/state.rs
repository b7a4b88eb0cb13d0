//! Full simulation state: velocity, concentrations, potential, time, noise,
//! and the random stream, plus the per-run options that alter stepping.

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::grid::{Domain, Grid};
use crate::noise::NoiseSpec;
use crate::poisson;
use crate::rngstream::RngStream;
use crate::species::{self, SpeciesParams};
use crate::stokes;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::sync::Arc;

/// Switches that alter stepping behavior. All of them are recorded in
/// checkpoint metadata so a run's provenance is explicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOptions {
    /// When false, the quadratic couplings (velocity self-advection, electric
    /// forcing, concentration advection, and electromigration) are dropped,
    /// leaving independent linear equations. Exists only so that stochastic
    /// oracle tests can compare against closed-form statistics.
    pub nonlinear_terms: bool,
    /// Opt-in: clamp negative concentration values to zero instead of
    /// rejecting the step. Off by default; clamp events are counted.
    pub clamp_negative: bool,
    /// Dimension of the divergence-free velocity space used on the square.
    pub galerkin_modes: usize,
    /// Where square eigenmode files are cached; `None` keeps them in memory.
    pub cache_dir: Option<PathBuf>,
}

impl Default for StepOptions {
    fn default() -> StepOptions {
        StepOptions {
            nonlinear_terms: true,
            clamp_negative: false,
            galerkin_modes: 16,
            cache_dir: None,
        }
    }
}

/// Counters updated by the stepper; diagnostic only.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepMonitor {
    /// Smallest concentration value seen in the most recent accepted step.
    pub min_concentration_last: f64,
    /// Number of steps in which negative values were clamped.
    pub clamp_events: u64,
    /// Total mass added by clamping, in the discrete integral sense.
    pub clamped_mass: f64,
}

#[derive(Debug, Clone)]
pub struct SystemState {
    pub grid: Grid,
    pub u: VectorField,
    pub c: Vec<ScalarField>,
    /// Potential consistent with the current concentrations: it solves the
    /// discrete Poisson problem for the charge density at time `t`.
    pub phi: ScalarField,
    pub t: f64,
    pub step_index: u64,
    pub params: Vec<SpeciesParams>,
    /// Boundary value of the potential on the square; ignored on the torus.
    pub phi_gamma: f64,
    /// Deterministic body force on the velocity.
    pub f: VectorField,
    pub noise: NoiseSpec,
    pub rng: RngStream,
    pub options: StepOptions,
    pub monitor: StepMonitor,
    square_basis: Option<Arc<Vec<(f64, VectorField)>>>,
}

/// Charge density `rho = sum_i z_i c_i`.
pub fn charge_density(c: &[ScalarField], params: &[SpeciesParams]) -> ScalarField {
    let mut rho = ScalarField::zeros(c[0].grid);
    for (ci, p) in c.iter().zip(params) {
        rho.add_scaled(p.valence, ci);
    }
    rho
}

impl SystemState {
    /// Validates the data against the domain, solves the initial potential,
    /// and assembles a state at `t = 0`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        u: VectorField,
        c: Vec<ScalarField>,
        params: Vec<SpeciesParams>,
        phi_gamma: f64,
        f: VectorField,
        noise: NoiseSpec,
        rng: RngStream,
        options: StepOptions,
    ) -> Result<SystemState> {
        let grid = u.grid();
        species::validate_species(&params, grid.domain)?;
        if grid.domain == Domain::UnitSquareDirichlet && noise.modes.len() > options.galerkin_modes {
            return Err(Error::InvalidArgument(format!(
                "{} noise modes exceed the {}-dimensional velocity space",
                noise.modes.len(),
                options.galerkin_modes
            )));
        }
        if c.len() != params.len() {
            return Err(Error::InvalidArgument(format!(
                "{} concentration fields for {} species",
                c.len(),
                params.len()
            )));
        }
        for ci in &c {
            ci.require_same_grid(&f.x)?;
            ci.require_same_grid(&u.x)?;
            if !ci.is_finite() {
                return Err(Error::InvalidArgument(
                    "initial concentrations contain non-finite values".into(),
                ));
            }
        }
        if !u.is_finite() || !f.is_finite() {
            return Err(Error::InvalidArgument(
                "initial velocity or forcing contains non-finite values".into(),
            ));
        }
        let rho = charge_density(&c, &params);
        let phi = poisson::solve_potential(&rho, phi_gamma)?;
        Ok(SystemState {
            grid,
            u,
            c,
            phi,
            t: 0.0,
            step_index: 0,
            params,
            phi_gamma,
            f,
            noise,
            rng,
            options,
            monitor: StepMonitor::default(),
            square_basis: None,
        })
    }

    pub fn charge_density(&self) -> ScalarField {
        charge_density(&self.c, &self.params)
    }

    /// Lazily computed divergence-free velocity basis for the square, shared
    /// via `Arc` so cloned states reuse it.
    pub fn square_basis(&mut self) -> Result<Arc<Vec<(f64, VectorField)>>> {
        if self.grid.domain != Domain::UnitSquareDirichlet {
            return Err(Error::DomainMismatch {
                required: Domain::UnitSquareDirichlet,
                found: self.grid.domain,
            });
        }
        if self.square_basis.is_none() {
            let modes = stokes::stokes_eigenmodes(
                self.grid,
                self.options.galerkin_modes,
                self.options.cache_dir.as_deref(),
            )?;
            self.square_basis = Some(Arc::new(modes));
        }
        Ok(self.square_basis.as_ref().unwrap().clone())
    }

    /// Re-solves the potential from the current concentrations. Steppers call
    /// this after every update so `phi` stays consistent.
    pub fn refresh_potential(&mut self) -> Result<()> {
        let rho = self.charge_density();
        self.phi = poisson::solve_potential(&rho, self.phi_gamma)?;
        Ok(())
    }
}
