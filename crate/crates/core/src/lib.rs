//! Numerical laboratory for a stochastic Nernst-Planck-Navier-Stokes system
//! in two dimensions: coupled ion transport, electric potential, and
//! incompressible flow driven by finite-mode white-in-time forcing, on the
//! periodic box and on the unit square.
//!
//! Layering, bottom up:
//! - [`grid`], [`field`]: storage and quadrature.
//! - [`spectral`], [`fdm`], [`calculus`], [`norms`]: discrete operators.
//! - [`poisson`], [`elliptic`]: potential solves and the gradient-potential
//!   integrability ratio experiment.
//! - [`species`], [`noise`], [`stokes`], [`state`], [`rngstream`]: model
//!   configuration and state.
//! - [`step`], [`picard`], [`shadow`], [`init`]: time integration.
//! - [`observables`], [`series`], [`ergodic`]: diagnostics and statistics.
//! - [`fieldio`], [`checkpoint`]: persistence.

pub mod calculus;
pub mod checkpoint;
pub mod elliptic;
pub mod ergodic;
pub mod error;
pub mod fdm;
pub mod field;
pub mod fieldio;
pub mod grid;
pub mod init;
pub mod noise;
pub mod norms;
pub mod observables;
pub mod picard;
pub mod poisson;
pub mod rngstream;
pub mod series;
pub mod shadow;
pub mod species;
pub mod spectral;
pub mod state;
pub mod step;
pub mod stokes;

pub use error::{Error, Result};
pub use field::{ScalarField, VectorField};
pub use grid::{Domain, Grid};
