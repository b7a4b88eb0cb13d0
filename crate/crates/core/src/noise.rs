//! Additive noise specification: finitely many divergence-free velocity
//! modes, each scaled by a constant amplitude and driven by an independent
//! Brownian increment.
//!
//! Torus modes are curls of single Fourier harmonics; square modes are
//! discrete Stokes eigenvectors. All mode fields are normalized to unit
//! `L^2` norm, so the energy injection rate is the sum of squared
//! amplitudes.

use crate::calculus;
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::grid::{Domain, Grid};
use crate::norms;
use crate::rngstream::RngStream;
use crate::spectral::{self, Spectrum};
use crate::stokes;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// One forced mode: a unit-norm divergence-free field and its amplitude.
#[derive(Debug, Clone)]
pub struct NoiseMode {
    pub amplitude: f64,
    pub field: VectorField,
    /// Spectral image of `field`, cached on the torus for the implicit step.
    pub hat: Option<(Spectrum, Spectrum)>,
}

/// Serializable recipe sufficient to rebuild the mode list exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NoiseDescriptor {
    Zero,
    /// Curl modes of the lowest Fourier harmonics, in canonical order.
    TorusLowModes { amplitudes: Vec<f64> },
    /// Lowest discrete Stokes eigenvectors of the square.
    SquareStokesModes { amplitudes: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct NoiseSpec {
    pub modes: Vec<NoiseMode>,
    pub descriptor: NoiseDescriptor,
}

/// Wave vectors in the canonical half-plane (`ky > 0`, or `ky = 0` and
/// `kx > 0`), sorted by `(|k|^2, kx, ky)`. The order fixes which modes a
/// truncation of size `n` keeps, including ties within a shell.
fn ordered_wavevectors(count: usize, kmax: i64) -> Vec<(i64, i64)> {
    let mut ks: Vec<(i64, i64)> = Vec::new();
    for kx in -kmax..=kmax {
        for ky in 0..=kmax {
            let half_plane = ky > 0 || (ky == 0 && kx > 0);
            if half_plane && kx * kx + ky * ky <= kmax * kmax {
                ks.push((kx, ky));
            }
        }
    }
    ks.sort_by_key(|&(kx, ky)| (kx * kx + ky * ky, kx, ky));
    ks.truncate(count);
    ks
}

/// First `count` fields of the canonical divergence-free torus basis:
/// for each wave vector the curl of the cosine stream, then of the sine
/// stream, each normalized to unit `L^2` norm. The fields are mutually
/// orthogonal and mean-free.
pub fn torus_divfree_basis(grid: Grid, count: usize) -> Result<Vec<VectorField>> {
    grid.require_torus()?;
    if count == 0 {
        return Ok(Vec::new());
    }
    let kmax = (grid.nx as i64) / 3;
    let ks = ordered_wavevectors(count.div_ceil(2), kmax);
    if 2 * ks.len() < count {
        return Err(Error::InvalidArgument(format!(
            "grid {}x{} cannot resolve {count} divergence-free modes",
            grid.nx, grid.ny
        )));
    }
    let mut basis = Vec::with_capacity(count);
    for &(kx, ky) in &ks {
        let (kxf, kyf) = (kx as f64, ky as f64);
        // ||curl psi||_{L^2} = |k| ||psi'||, and ||cos(k.x)||^2 = 2 pi^2.
        let scale = 1.0 / ((kxf * kxf + kyf * kyf).sqrt() * (2.0 * std::f64::consts::PI.powi(2)).sqrt());
        // psi = cos(k.x): curl = (-ky sin, kx sin).
        basis.push(VectorField::from_fns(
            grid,
            |x, y| -kyf * (kxf * x + kyf * y).sin() * scale,
            |x, y| kxf * (kxf * x + kyf * y).sin() * scale,
        ));
        if basis.len() == count {
            break;
        }
        // psi = sin(k.x): curl = (ky cos, -kx cos).
        basis.push(VectorField::from_fns(
            grid,
            |x, y| kyf * (kxf * x + kyf * y).cos() * scale,
            |x, y| -kxf * (kxf * x + kyf * y).cos() * scale,
        ));
        if basis.len() == count {
            break;
        }
    }
    Ok(basis)
}

impl NoiseSpec {
    /// No forcing; `draw_increments` returns an empty vector.
    pub fn zero() -> NoiseSpec {
        NoiseSpec {
            modes: Vec::new(),
            descriptor: NoiseDescriptor::Zero,
        }
    }

    /// Torus noise on the first `amplitudes.len()` canonical modes.
    pub fn torus_low_modes(grid: Grid, amplitudes: &[f64]) -> Result<NoiseSpec> {
        grid.require_torus()?;
        let basis = torus_divfree_basis(grid, amplitudes.len())?;
        let mut modes = Vec::with_capacity(basis.len());
        for (field, &amplitude) in basis.into_iter().zip(amplitudes) {
            let hat = Some((spectral::forward(&field.x)?, spectral::forward(&field.y)?));
            modes.push(NoiseMode {
                amplitude,
                field,
                hat,
            });
        }
        Ok(NoiseSpec {
            modes,
            descriptor: NoiseDescriptor::TorusLowModes {
                amplitudes: amplitudes.to_vec(),
            },
        })
    }

    /// Default torus forcing: the eight lowest modes at a common amplitude.
    pub fn torus_default(grid: Grid, amplitude: f64) -> Result<NoiseSpec> {
        NoiseSpec::torus_low_modes(grid, &[amplitude; 8])
    }

    /// Square noise on the lowest discrete Stokes eigenvectors.
    pub fn square_stokes(
        grid: Grid,
        amplitudes: &[f64],
        cache_dir: Option<&Path>,
    ) -> Result<NoiseSpec> {
        grid.require_square()?;
        let pairs = stokes::stokes_eigenmodes(grid, amplitudes.len(), cache_dir)?;
        let modes = pairs
            .into_iter()
            .zip(amplitudes)
            .map(|((_, field), &amplitude)| NoiseMode {
                amplitude,
                field,
                hat: None,
            })
            .collect();
        Ok(NoiseSpec {
            modes,
            descriptor: NoiseDescriptor::SquareStokesModes {
                amplitudes: amplitudes.to_vec(),
            },
        })
    }

    /// Rebuilds the spec recorded in a checkpoint sidecar.
    pub fn from_descriptor(
        grid: Grid,
        descriptor: &NoiseDescriptor,
        cache_dir: Option<&Path>,
    ) -> Result<NoiseSpec> {
        match descriptor {
            NoiseDescriptor::Zero => Ok(NoiseSpec::zero()),
            NoiseDescriptor::TorusLowModes { amplitudes } => {
                NoiseSpec::torus_low_modes(grid, amplitudes)
            }
            NoiseDescriptor::SquareStokesModes { amplitudes } => {
                NoiseSpec::square_stokes(grid, amplitudes, cache_dir)
            }
        }
    }

    /// One `N(0, dt)` increment per mode, drawn in mode order. Exactly one
    /// draw per mode per step, so two runs sharing a stream stay aligned.
    pub fn draw_increments(&self, rng: &mut RngStream, dt: f64) -> Vec<f64> {
        let sqrt_dt = dt.sqrt();
        self.modes.iter().map(|_| sqrt_dt * rng.normal()).collect()
    }

    /// `sum_k a_k^2 ||g_k||^2`: the mean energy injection rate.
    pub fn l2_norm_sq(&self) -> f64 {
        self.modes
            .iter()
            .map(|m| m.amplitude.powi(2) * norms::l2_norm_vec(&m.field).powi(2))
            .sum()
    }

    /// `sum_k a_k^2 (||g_k||^2 + ||grad g_k||^2)`.
    pub fn h1_norm_sq(&self) -> Result<f64> {
        let mut total = 0.0;
        for m in &self.modes {
            total += m.amplitude.powi(2) * norms::h1_norm_sq_vec(&m.field)?;
        }
        Ok(total)
    }

    /// Checks the structural invariants of the mode list: unit norm,
    /// divergence-free, mean-free, and zero wall values on the square.
    pub fn validate(&self) -> Result<()> {
        for (i, m) in self.modes.iter().enumerate() {
            let grid = m.field.grid();
            let norm = norms::l2_norm_vec(&m.field);
            if (norm - 1.0).abs() > 1e-8 {
                return Err(Error::Precondition(format!(
                    "noise mode {i} has L2 norm {norm}, expected 1"
                )));
            }
            let div = norms::l2_norm(&calculus::divergence(&m.field)?);
            if div > 1e-8 {
                return Err(Error::Precondition(format!(
                    "noise mode {i} has divergence norm {div}"
                )));
            }
            if m.field.x.mean().abs() > 1e-10 || m.field.y.mean().abs() > 1e-10 {
                return Err(Error::Precondition(format!("noise mode {i} is not mean-free")));
            }
            if grid.domain == Domain::UnitSquareDirichlet {
                for j in 0..grid.ny {
                    for ii in 0..grid.nx {
                        if grid.is_boundary(ii, j)
                            && (m.field.x.at(ii, j).abs() > 1e-10
                                || m.field.y.at(ii, j).abs() > 1e-10)
                        {
                            return Err(Error::Precondition(format!(
                                "noise mode {i} does not vanish on the wall"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Orthogonal projection of `v` onto the span of `basis`, which must be
/// orthonormal in the discrete `L^2` inner product.
pub fn project_onto_basis(v: &VectorField, basis: &[VectorField]) -> VectorField {
    let mut out = VectorField::zeros(v.grid());
    for e in basis {
        let coeff = norms::l2_inner_vec(v, e);
        out.add_scaled(coeff, e);
    }
    out
}
