//! Seeded initial-data builders.
//!
//! All three kinds produce nonnegative concentrations whose means satisfy the
//! electroneutrality relation exactly: on the torus the valence-weighted sum
//! of concentration means is zero, on the square the valence-weighted sum of
//! Dirichlet boundary data and blocked-species means is zero. Infeasible
//! requests (a forced nonpositive mean) are configuration errors, not
//! silently repaired.

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::grid::{Domain, Grid};
use crate::noise::{self, NoiseSpec};
use crate::rngstream::RngStream;
use crate::species::{BoundaryKind, SpeciesParams};
use crate::state::{StepOptions, SystemState};

/// Stream index reserved for drawing initial data, distinct from the
/// trajectory indices used for noise so data and path draws never alias.
pub const DATA_STREAM_INDEX: u64 = 0x6461_7461;

/// Smallest admissible species mean; an enforced mean below this is treated
/// as an infeasible configuration.
const MIN_MEAN: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub enum InitialKind {
    /// Random smooth positive concentrations around random means, neutral by
    /// construction; random low-mode velocity on the torus.
    Neutral { seed: u64 },
    /// The steady state (constants at the boundary data / enforced means,
    /// zero velocity) plus an `epsilon`-scaled smooth perturbation.
    /// `epsilon = 0` reproduces the steady state exactly.
    SteadyPlusPerturbation { epsilon: f64, seed: u64 },
    /// The canonical two-species configuration: valences (1, -1), equal
    /// diffusivities, equal unit means, so the charge mean vanishes.
    TwoSpecies { seed: u64 },
}

impl InitialKind {
    fn seed(&self) -> u64 {
        match *self {
            InitialKind::Neutral { seed } => seed,
            InitialKind::SteadyPlusPerturbation { seed, .. } => seed,
            InitialKind::TwoSpecies { seed } => seed,
        }
    }
}

/// Smooth random torus field: low modes with `1/(1+|k|^2)` spectral falloff,
/// analytically mean-free, scaled to unit maximum.
fn torus_perturbation(grid: Grid, rng: &mut RngStream, band: i64) -> ScalarField {
    let mut f = ScalarField::zeros(grid);
    for kx in -band..=band {
        for ky in 0..=band {
            if ky == 0 && kx <= 0 {
                continue;
            }
            let (a, b) = (rng.normal(), rng.normal());
            let w = 1.0 / (1.0 + (kx * kx + ky * ky) as f64);
            let (kxf, kyf) = (kx as f64, ky as f64);
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    let phase = kxf * grid.node_x(i) + kyf * grid.node_y(j);
                    *f.at_mut(i, j) += w * (a * phase.cos() + b * phase.sin());
                }
            }
        }
    }
    normalize_max(&mut f);
    f
}

/// Nonnegative square-domain bump vanishing on the wall: the first Dirichlet
/// mode modulated by a bounded random factor in [0.5, 1.5].
fn square_sine_bump(grid: Grid, rng: &mut RngStream, band: i64) -> ScalarField {
    let pi = std::f64::consts::PI;
    let (a, b) = (0.5 * rng.normal().tanh(), 0.5 * rng.normal().tanh());
    let bandf = band as f64;
    ScalarField::from_fn(grid, |x, y| {
        let modulation = 1.0 + a * (bandf * pi * x).cos() * 0.5 + b * (bandf * pi * y).cos() * 0.5;
        (pi * x).sin() * (pi * y).sin() * modulation
    })
}

/// Mean-corrected square-domain field built from Neumann cosine modes,
/// scaled to unit maximum. Used for blocked species, whose data has no
/// boundary constraint.
fn square_cos_perturbation(grid: Grid, rng: &mut RngStream, band: i64) -> ScalarField {
    let pi = std::f64::consts::PI;
    let mut f = ScalarField::zeros(grid);
    for kx in 0..=band {
        for ky in 0..=band {
            if kx == 0 && ky == 0 {
                continue;
            }
            let a = rng.normal() / (1.0 + (kx * kx + ky * ky) as f64);
            let (kxf, kyf) = (kx as f64, ky as f64);
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    *f.at_mut(i, j) +=
                        a * (kxf * pi * grid.node_x(i)).cos() * (kyf * pi * grid.node_y(j)).cos();
                }
            }
        }
    }
    let mean = f.mean();
    f.shift(-mean);
    normalize_max(&mut f);
    f
}

fn normalize_max(f: &mut ScalarField) {
    let m = f.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if m > 0.0 {
        f.scale(1.0 / m);
    }
}

/// Random divergence-free torus velocity with the requested `L^2` norm.
fn torus_velocity(grid: Grid, rng: &mut RngStream, amplitude: f64) -> Result<VectorField> {
    let basis = noise::torus_divfree_basis(grid, 8)?;
    let mut v = VectorField::zeros(grid);
    for e in &basis {
        v.add_scaled(rng.normal(), e);
    }
    let n = crate::norms::l2_norm_vec(&v);
    if n > 0.0 {
        v.scale(amplitude / n);
    }
    Ok(v)
}

/// Target means satisfying the neutrality relation exactly. Dirichlet
/// species contribute their boundary data; the last adjustable species with
/// nonzero valence absorbs the imbalance.
fn neutral_means(params: &[SpeciesParams], draws: &[f64]) -> Result<Vec<f64>> {
    let mut means: Vec<f64> = Vec::with_capacity(params.len());
    let mut adjustable: Option<usize> = None;
    for (i, p) in params.iter().enumerate() {
        match p.bc {
            BoundaryKind::Dirichlet { gamma } => means.push(gamma),
            BoundaryKind::Periodic | BoundaryKind::Blocking => {
                means.push(draws[i]);
                if p.valence != 0.0 {
                    adjustable = Some(i);
                }
            }
        }
    }
    let residual: f64 = params
        .iter()
        .zip(&means)
        .map(|(p, m)| p.valence * m)
        .sum();
    if residual != 0.0 {
        let Some(k) = adjustable else {
            return Err(Error::InvalidArgument(format!(
                "neutrality imbalance {residual:.3e} with no adjustable charged species"
            )));
        };
        let others: f64 = params
            .iter()
            .zip(&means)
            .enumerate()
            .filter(|&(i, _)| i != k)
            .map(|(_, (p, m))| p.valence * m)
            .sum();
        means[k] = -others / params[k].valence;
        if means[k] < MIN_MEAN {
            return Err(Error::InvalidArgument(format!(
                "neutrality forces species {k} mean to {:.3e}, below the {MIN_MEAN} floor",
                means[k]
            )));
        }
    }
    Ok(means)
}

/// Builds a seeded initial state. The returned state's own random stream is
/// `(seed, 0)`; ensemble drivers that need one stream per path overwrite it.
pub fn make_initial_data(
    kind: &InitialKind,
    grid: Grid,
    params: &[SpeciesParams],
    phi_gamma: f64,
    f: VectorField,
    noise_spec: NoiseSpec,
    options: StepOptions,
) -> Result<SystemState> {
    crate::species::validate_species(params, grid.domain)?;
    if let InitialKind::TwoSpecies { .. } = kind {
        let ok = params.len() == 2
            && params[0].valence == 1.0
            && params[1].valence == -1.0
            && params[0].diffusivity == params[1].diffusivity;
        if !ok {
            return Err(Error::InvalidArgument(
                "the two-species builder requires valences (1, -1) and equal diffusivities".into(),
            ));
        }
    }
    let mut data_rng = RngStream::new(kind.seed(), DATA_STREAM_INDEX);

    // Per-species base means: random near 1 for Neutral, exactly 1 otherwise.
    let draws: Vec<f64> = params
        .iter()
        .map(|_| match kind {
            InitialKind::Neutral { .. } => 1.0 + 0.1 * data_rng.normal().tanh(),
            _ => 1.0,
        })
        .collect();
    let means = neutral_means(params, &draws)?;

    // Perturbation amplitude per kind; zero reproduces the steady state.
    let eps = match kind {
        InitialKind::SteadyPlusPerturbation { epsilon, .. } => {
            if !(0.0..=0.5).contains(epsilon) {
                return Err(Error::InvalidArgument(format!(
                    "perturbation size {epsilon} outside [0, 0.5]; positivity is not guaranteed"
                )));
            }
            *epsilon
        }
        _ => 0.2,
    };

    let mut c = Vec::with_capacity(params.len());
    for (p, &m) in params.iter().zip(&means) {
        let field = match p.bc {
            BoundaryKind::Periodic => {
                let mut ci = ScalarField::constant(grid, m);
                if eps > 0.0 {
                    let pert = torus_perturbation(grid, &mut data_rng, 3);
                    ci.add_scaled(eps * m, &pert);
                }
                ci
            }
            BoundaryKind::Dirichlet { gamma } => {
                let mut ci = ScalarField::constant(grid, gamma);
                if eps > 0.0 {
                    let bump = square_sine_bump(grid, &mut data_rng, 2);
                    ci.add_scaled(eps * gamma.max(0.5), &bump);
                }
                ci
            }
            BoundaryKind::Blocking => {
                let mut ci = ScalarField::constant(grid, m);
                if eps > 0.0 {
                    let pert = square_cos_perturbation(grid, &mut data_rng, 2);
                    ci.add_scaled(eps * m, &pert);
                }
                ci
            }
        };
        if field.min() < 0.0 {
            return Err(Error::Precondition(format!(
                "constructed concentration dips to {:.3e}; perturbation too large",
                field.min()
            )));
        }
        c.push(field);
    }

    let u = match (grid.domain, kind) {
        (Domain::Torus2Pi, InitialKind::SteadyPlusPerturbation { epsilon, .. }) => {
            if *epsilon > 0.0 {
                torus_velocity(grid, &mut data_rng, 0.5 * epsilon)?
            } else {
                VectorField::zeros(grid)
            }
        }
        (Domain::Torus2Pi, _) => torus_velocity(grid, &mut data_rng, 0.1)?,
        // Square velocities start at rest; stochastic runs excite them
        // through the wall-compatible noise modes.
        (Domain::UnitSquareDirichlet, _) => VectorField::zeros(grid),
    };

    SystemState::new(
        u,
        c,
        params.to_vec(),
        phi_gamma,
        f,
        noise_spec,
        RngStream::new(kind.seed(), 0),
        options,
    )
}
