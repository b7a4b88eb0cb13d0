//! One IMEX Euler-Maruyama time step of the coupled system.
//!
//! Transport, electromigration, the electric force, and the noise increment
//! are explicit; diffusion of concentrations and velocity is implicit. On
//! the torus the implicit solves are exact per Fourier mode and the velocity
//! stays divergence-free mode by mode. On the square, concentrations use
//! interior conjugate-gradient solves (Dirichlet species) or a finite-volume
//! flux form with zero wall flux (blocking species, exact mean
//! conservation), and the velocity evolves by Galerkin truncation onto the
//! cached discrete Stokes eigenbasis, which keeps it exactly
//! divergence-free with zero wall values.
//!
//! Step gates, in order: a CFL check on the advecting velocity, then a
//! positivity check on the updated concentrations. Both run before any
//! noise is drawn, so rejected attempts consume no randomness.

use crate::calculus;
use crate::error::{Error, Result};
use crate::fdm;
use crate::field::{ScalarField, VectorField};
use crate::grid::{Domain, Grid};
use crate::spectral;
use crate::state::SystemState;
use num_complex::Complex;

/// Fraction of the advective CFL limit a step may use.
const CFL_FRACTION: f64 = 0.25;
/// A concentration is treated as negative when it drops below
/// `-POSITIVITY_REL * max c`.
const POSITIVITY_REL: f64 = 1e-8;
/// Relative tolerance of the implicit concentration solves on the square.
const IMPLICIT_TOL: f64 = 1e-11;

/// Largest admissible step for the current velocity.
pub fn cfl_limit(state: &SystemState) -> f64 {
    let h = state.grid.spacing_x().min(state.grid.spacing_y());
    CFL_FRACTION * h / state.u.max_speed().max(1.0)
}

/// Divergence of the full ionic flux `D (grad c + z c grad phi)`, the
/// right-hand side of one concentration equation without advection.
pub fn ionic_flux_divergence(
    c: &ScalarField,
    phi: &ScalarField,
    diffusivity: f64,
    valence: f64,
) -> Result<ScalarField> {
    let grad_c = calculus::gradient(c)?;
    let grad_phi = calculus::gradient(phi)?;
    let (jx, jy) = match c.grid.domain {
        Domain::Torus2Pi => (
            spectral::dealiased_product(c, &grad_phi.x)?,
            spectral::dealiased_product(c, &grad_phi.y)?,
        ),
        Domain::UnitSquareDirichlet => (
            c.pointwise_mul(&grad_phi.x),
            c.pointwise_mul(&grad_phi.y),
        ),
    };
    let mut fx = grad_c.x;
    fx.add_scaled(valence, &jx);
    fx.scale(diffusivity);
    let mut fy = grad_c.y;
    fy.add_scaled(valence, &jy);
    fy.scale(diffusivity);
    calculus::divergence(&VectorField { x: fx, y: fy })
}

/// Explicit velocity right-hand side `P(-u.grad u - rho grad phi + f)` on
/// the torus, Leray-projected and dealiased.
pub fn navier_stokes_explicit_rhs(
    u: &VectorField,
    rho: &ScalarField,
    phi: &ScalarField,
    f: &VectorField,
    nonlinear: bool,
) -> Result<VectorField> {
    let mut rhs = f.clone();
    if nonlinear {
        let adv_x = calculus::advect(u, &u.x)?;
        let adv_y = calculus::advect(u, &u.y)?;
        rhs.x.add_scaled(-1.0, &adv_x);
        rhs.y.add_scaled(-1.0, &adv_y);
        let grad_phi = calculus::gradient(phi)?;
        match u.grid().domain {
            Domain::Torus2Pi => {
                let fx = spectral::dealiased_product(rho, &grad_phi.x)?;
                let fy = spectral::dealiased_product(rho, &grad_phi.y)?;
                rhs.x.add_scaled(-1.0, &fx);
                rhs.y.add_scaled(-1.0, &fy);
            }
            Domain::UnitSquareDirichlet => {
                rhs.x.add_scaled(-1.0, &rho.pointwise_mul(&grad_phi.x));
                rhs.y.add_scaled(-1.0, &rho.pointwise_mul(&grad_phi.y));
            }
        }
    }
    match u.grid().domain {
        Domain::Torus2Pi => spectral::leray_project(&rhs),
        // On the square the projection happens inside the Galerkin step;
        // return the unprojected force for diagnostics.
        Domain::UnitSquareDirichlet => Ok(rhs),
    }
}

/// Advances `state` by `dt`, drawing one Brownian increment per noise mode.
pub fn step(state: &mut SystemState, dt: f64) -> Result<()> {
    step_impl(state, dt, None, None, None)
}

/// Advances `state` by `dt` consuming caller-supplied increments (scaled
/// Brownian draws, `N(0, dt)` per mode). Used by algorithms that share one
/// noise path across several trajectories.
pub fn step_with_increments(state: &mut SystemState, dt: f64, increments: &[f64]) -> Result<()> {
    check_increments(state, increments)?;
    step_impl(state, dt, Some(increments), None, None)
}

/// Advances `state` by `dt` with the electric coupling frozen at the given
/// potential and charge density instead of the state's own. The transport
/// equations stay linear in the evolving concentrations, which is what the
/// successive-approximation solver iterates on.
pub fn step_with_lagged_coupling(
    state: &mut SystemState,
    dt: f64,
    increments: &[f64],
    phi_lag: &ScalarField,
    rho_lag: &ScalarField,
) -> Result<()> {
    check_increments(state, increments)?;
    phi_lag.require_same_grid(&state.phi)?;
    rho_lag.require_same_grid(&state.phi)?;
    step_impl(state, dt, Some(increments), Some((phi_lag, rho_lag)), None)
}

/// Advances `state` by `dt` with an additional explicit force on the
/// velocity (the nudging control of the coupling construction).
pub fn step_with_forcing(
    state: &mut SystemState,
    dt: f64,
    increments: &[f64],
    extra_force: &VectorField,
) -> Result<()> {
    check_increments(state, increments)?;
    extra_force.x.require_same_grid(&state.phi)?;
    step_impl(state, dt, Some(increments), None, Some(extra_force))
}

fn check_increments(state: &SystemState, increments: &[f64]) -> Result<()> {
    if increments.len() != state.noise.modes.len() {
        return Err(Error::InvalidArgument(format!(
            "{} increments for {} noise modes",
            increments.len(),
            state.noise.modes.len()
        )));
    }
    Ok(())
}

/// Retries a step with halved `dt` on rejection, up to `max_halvings`
/// times. Returns the step size actually taken.
pub fn advance(state: &mut SystemState, dt: f64, max_halvings: u32) -> Result<f64> {
    let mut try_dt = dt;
    for _ in 0..=max_halvings {
        match step(state, try_dt) {
            Ok(()) => return Ok(try_dt),
            Err(Error::StepRejected { .. }) => try_dt *= 0.5,
            Err(e) => return Err(e),
        }
    }
    Err(Error::StepRejected {
        reason: format!("still rejected after {max_halvings} halvings"),
        suggested_dt: try_dt,
    })
}

fn step_impl(
    state: &mut SystemState,
    dt: f64,
    increments: Option<&[f64]>,
    lag: Option<(&ScalarField, &ScalarField)>,
    extra_force: Option<&VectorField>,
) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {dt}")));
    }
    let limit = cfl_limit(state);
    if dt > limit {
        return Err(Error::StepRejected {
            reason: format!("dt = {dt:.3e} exceeds advective CFL limit {limit:.3e}"),
            suggested_dt: dt / 2.0,
        });
    }
    // Coupling fields: the state's own by default, frozen ones when lagged.
    let (phi_used, rho_used) = match lag {
        Some((p, r)) => (p.clone(), r.clone()),
        None => (state.phi.clone(), state.charge_density()),
    };
    match state.grid.domain {
        Domain::Torus2Pi => step_torus(state, dt, increments, &phi_used, &rho_used, extra_force),
        Domain::UnitSquareDirichlet => {
            step_square(state, dt, increments, &phi_used, &rho_used, extra_force)
        }
    }
}

/// Positivity gate shared by both domains. Returns the fields to commit,
/// clamped if the state opts in, or a rejection.
fn gate_positivity(
    state: &mut SystemState,
    mut new_c: Vec<ScalarField>,
    dt: f64,
) -> Result<Vec<ScalarField>> {
    let mut global_min = f64::INFINITY;
    let mut violated = false;
    for c in &new_c {
        let min = c.min();
        let threshold = -POSITIVITY_REL * c.max().max(0.0);
        global_min = global_min.min(min);
        if min < threshold {
            violated = true;
        }
    }
    state.monitor.min_concentration_last = global_min;
    if violated {
        if state.options.clamp_negative {
            let mut added = 0.0;
            for c in &mut new_c {
                let grid = c.grid;
                for j in 0..grid.ny {
                    for i in 0..grid.nx {
                        let v = c.at(i, j);
                        if v < 0.0 {
                            added -= v * grid.quad_weight(i, j);
                            *c.at_mut(i, j) = 0.0;
                        }
                    }
                }
            }
            state.monitor.clamp_events += 1;
            state.monitor.clamped_mass += added;
        } else {
            return Err(Error::StepRejected {
                reason: format!("concentration minimum {global_min:.3e} below positivity threshold"),
                suggested_dt: dt / 2.0,
            });
        }
    }
    Ok(new_c)
}

fn check_finite(state: &SystemState, u: &VectorField, c: &[ScalarField]) -> Result<()> {
    if !u.is_finite() {
        return Err(Error::BlowUp {
            step_index: state.step_index,
            field: "velocity".into(),
        });
    }
    for (i, ci) in c.iter().enumerate() {
        if !ci.is_finite() {
            return Err(Error::BlowUp {
                step_index: state.step_index,
                field: format!("concentration {i}"),
            });
        }
    }
    Ok(())
}

fn step_torus(
    state: &mut SystemState,
    dt: f64,
    increments: Option<&[f64]>,
    phi_used: &ScalarField,
    rho_used: &ScalarField,
    extra_force: Option<&VectorField>,
) -> Result<()> {
    let grad_phi = calculus::gradient(phi_used)?;

    // Concentrations: explicit transport and migration, implicit diffusion
    // solved exactly per mode.
    let mut new_c = Vec::with_capacity(state.c.len());
    for (ci, p) in state.c.iter().zip(&state.params) {
        let mut chat = spectral::forward(ci)?;
        if state.options.nonlinear_terms {
            let adv = calculus::advect(&state.u, ci)?;
            let jx = spectral::dealiased_product(ci, &grad_phi.x)?;
            let jy = spectral::dealiased_product(ci, &grad_phi.y)?;
            let mig = spectral::divergence(&VectorField { x: jx, y: jy })?;
            let mut explicit = mig;
            explicit.scale(p.diffusivity * p.valence);
            explicit.add_scaled(-1.0, &adv);
            let ehat = spectral::forward(&explicit)?;
            for (a, b) in chat.coeffs.iter_mut().zip(&ehat.coeffs) {
                *a += dt * b;
            }
        }
        let d = p.diffusivity;
        chat.apply_multiplier(|kx, ky| 1.0 / (1.0 + dt * d * (kx * kx + ky * ky) as f64));
        new_c.push(spectral::inverse(&chat));
    }
    let new_c = gate_positivity(state, new_c, dt)?;

    // Velocity: projected explicit force, additive noise, exact implicit
    // per-mode diffusion.
    let mut rhs = navier_stokes_explicit_rhs(
        &state.u,
        rho_used,
        phi_used,
        &state.f,
        state.options.nonlinear_terms,
    )?;
    if let Some(extra) = extra_force {
        rhs.add_scaled(1.0, extra);
    }
    let mut ux = spectral::forward(&state.u.x)?;
    let mut uy = spectral::forward(&state.u.y)?;
    let rx = spectral::forward(&rhs.x)?;
    let ry = spectral::forward(&rhs.y)?;
    for (a, b) in ux.coeffs.iter_mut().zip(&rx.coeffs) {
        *a += dt * b;
    }
    for (a, b) in uy.coeffs.iter_mut().zip(&ry.coeffs) {
        *a += dt * b;
    }
    let owned;
    let incr: &[f64] = match increments {
        Some(v) => v,
        None => {
            owned = state.noise.draw_increments(&mut state.rng, dt);
            &owned
        }
    };
    for (mode, dw) in state.noise.modes.iter().zip(incr) {
        let (gx, gy) = mode.hat.as_ref().ok_or_else(|| {
            Error::Precondition("torus noise mode is missing its spectral image".into())
        })?;
        let scale = Complex::new(mode.amplitude * dw, 0.0);
        for (a, b) in ux.coeffs.iter_mut().zip(&gx.coeffs) {
            *a += scale * b;
        }
        for (a, b) in uy.coeffs.iter_mut().zip(&gy.coeffs) {
            *a += scale * b;
        }
    }
    let mult = |kx: i64, ky: i64| 1.0 / (1.0 + dt * (kx * kx + ky * ky) as f64);
    ux.apply_multiplier(mult);
    uy.apply_multiplier(mult);
    let new_u = VectorField {
        x: spectral::inverse(&ux),
        y: spectral::inverse(&uy),
    };

    check_finite(state, &new_u, &new_c)?;
    state.u = new_u;
    state.c = new_c;
    state.refresh_potential()?;
    state.t += dt;
    state.step_index += 1;
    Ok(())
}

/// Finite-volume divergence of the explicit blocking-species fluxes
/// (electromigration and advection) with zero flux through the walls.
/// The discrete weighted mean of the result is exactly zero by telescoping.
fn fv_explicit_divergence(
    c: &ScalarField,
    u: &VectorField,
    grad_source: &ScalarField,
    diffusivity: f64,
    valence: f64,
) -> ScalarField {
    let g = c.grid;
    let (hx, hy) = (g.spacing_x(), g.spacing_y());
    let mut out = ScalarField::zeros(g);
    let wx = |i: usize| if i == 0 || i == g.nx - 1 { hx / 2.0 } else { hx };
    let wy = |j: usize| if j == 0 || j == g.ny - 1 { hy / 2.0 } else { hy };
    // x-faces between (i, j) and (i+1, j)
    for j in 0..g.ny {
        for i in 0..g.nx - 1 {
            let cbar = 0.5 * (c.at(i, j) + c.at(i + 1, j));
            let ubar = 0.5 * (u.x.at(i, j) + u.x.at(i + 1, j));
            let dphi = (grad_source.at(i + 1, j) - grad_source.at(i, j)) / hx;
            let flux = diffusivity * valence * cbar * dphi - ubar * cbar;
            *out.at_mut(i, j) += flux / wx(i);
            *out.at_mut(i + 1, j) -= flux / wx(i + 1);
        }
    }
    // y-faces between (i, j) and (i, j+1)
    for j in 0..g.ny - 1 {
        for i in 0..g.nx {
            let cbar = 0.5 * (c.at(i, j) + c.at(i, j + 1));
            let vbar = 0.5 * (u.y.at(i, j) + u.y.at(i, j + 1));
            let dphi = (grad_source.at(i, j + 1) - grad_source.at(i, j)) / hy;
            let flux = diffusivity * valence * cbar * dphi - vbar * cbar;
            *out.at_mut(i, j) += flux / wy(j);
            *out.at_mut(i, j + 1) -= flux / wy(j + 1);
        }
    }
    out
}

/// Applies `(I - dt D L) x` where `L` is the finite-volume diffusion
/// operator with zero flux through the walls; self-adjoint and positive
/// definite in the trapezoid-weighted inner product.
fn fv_helmholtz_apply(grid: Grid, dt_d: f64, x: &[f64], y: &mut [f64]) {
    let (hx, hy) = (grid.spacing_x(), grid.spacing_y());
    let wx = |i: usize| if i == 0 || i == grid.nx - 1 { hx / 2.0 } else { hx };
    let wy = |j: usize| if j == 0 || j == grid.ny - 1 { hy / 2.0 } else { hy };
    y.copy_from_slice(x);
    let idx = |i: usize, j: usize| j * grid.nx + i;
    for j in 0..grid.ny {
        for i in 0..grid.nx - 1 {
            let flux = (x[idx(i + 1, j)] - x[idx(i, j)]) / hx;
            y[idx(i, j)] -= dt_d * flux / wx(i);
            y[idx(i + 1, j)] += dt_d * flux / wx(i + 1);
        }
    }
    for j in 0..grid.ny - 1 {
        for i in 0..grid.nx {
            let flux = (x[idx(i, j + 1)] - x[idx(i, j)]) / hy;
            y[idx(i, j)] -= dt_d * flux / wy(j);
            y[idx(i, j + 1)] += dt_d * flux / wy(j + 1);
        }
    }
}

fn step_square(
    state: &mut SystemState,
    dt: f64,
    increments: Option<&[f64]>,
    phi_used: &ScalarField,
    rho_used: &ScalarField,
    extra_force: Option<&VectorField>,
) -> Result<()> {
    use crate::species::BoundaryKind;

    let grid = state.grid;
    let grad_phi = fdm::gradient(phi_used);
    let max_cg = 20 * grid.nx.max(grid.ny) * grid.nx.max(grid.ny);

    let mut new_c = Vec::with_capacity(state.c.len());
    for (ci, p) in state.c.iter().zip(&state.params) {
        match p.bc {
            BoundaryKind::Dirichlet { gamma } => {
                // Node-centered explicit terms, interior implicit solve,
                // boundary trace reimposed exactly through the lift.
                let mut rhs_field = ci.clone();
                if state.options.nonlinear_terms {
                    let adv = calculus::advect(&state.u, ci)?;
                    let jx = ci.pointwise_mul(&grad_phi.x);
                    let jy = ci.pointwise_mul(&grad_phi.y);
                    let mig = fdm::divergence(&VectorField { x: jx, y: jy });
                    rhs_field.add_scaled(dt * p.diffusivity * p.valence, &mig);
                    rhs_field.add_scaled(-dt, &adv);
                }
                rhs_field.shift(-gamma);
                let m = fdm::interior_len(grid);
                let mut b = vec![0.0; m];
                fdm::pack_interior(&rhs_field, &mut b);
                let mut x = vec![0.0; m];
                let mut guess = ci.clone();
                guess.shift(-gamma);
                fdm::pack_interior(&guess, &mut x);
                let op = fdm::InteriorHelmholtz {
                    grid,
                    alpha: 1.0,
                    beta: dt * p.diffusivity,
                };
                let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
                fdm::conjugate_gradient(
                    |p_, q| op.apply(p_, q),
                    &b,
                    &mut x,
                    None,
                    IMPLICIT_TOL * b_norm,
                    max_cg,
                )?;
                // The solve is for the lifted variable `w = c - gamma` with
                // zero boundary; shifting restores the exact trace.
                let mut out = ScalarField::zeros(grid);
                fdm::unpack_interior(&x, &mut out);
                out.shift(gamma);
                new_c.push(out);
            }
            BoundaryKind::Blocking => {
                // Finite-volume flux form over trapezoid-weight control
                // volumes; no boundary faces, so the weighted mean of the
                // update telescopes to zero and the species mass is
                // conserved exactly (up to the solver residual, which
                // preserves the mean by construction).
                let mut rhs = ci.clone();
                if state.options.nonlinear_terms {
                    let e = fv_explicit_divergence(ci, &state.u, phi_used, p.diffusivity, p.valence);
                    rhs.add_scaled(dt, &e);
                }
                let weights: Vec<f64> = (0..grid.len())
                    .map(|k| grid.quad_weight(k % grid.nx, k / grid.nx))
                    .collect();
                let mut x = ci.values.clone();
                let dt_d = dt * p.diffusivity;
                let b_norm = rhs
                    .values
                    .iter()
                    .zip(&weights)
                    .map(|(v, w)| v * v * w)
                    .sum::<f64>()
                    .sqrt();
                fdm::conjugate_gradient(
                    |p_, q| fv_helmholtz_apply(grid, dt_d, p_, q),
                    &rhs.values,
                    &mut x,
                    Some(&weights),
                    IMPLICIT_TOL * b_norm.max(1e-300),
                    max_cg,
                )?;
                new_c.push(ScalarField { grid, values: x });
            }
            BoundaryKind::Periodic => unreachable!("validated against the square domain"),
        }
    }
    let new_c = gate_positivity(state, new_c, dt)?;

    // Velocity: Galerkin truncation onto the discrete Stokes eigenbasis.
    // Anything orthogonal to the basis carries no dynamics and is discarded
    // the first time this runs; initial data should live in the span.
    let quiescent = state.u.max_speed() == 0.0
        && state.f.max_speed() == 0.0
        && state.noise.modes.is_empty()
        && extra_force.is_none()
        && rho_used.max() == rho_used.min();
    let new_u = if quiescent {
        // Constant charge forces a pure gradient, which every basis mode
        // annihilates; the velocity stays identically zero.
        VectorField::zeros(grid)
    } else {
        let basis = state.square_basis()?;
        let mut force = navier_stokes_explicit_rhs(
            &state.u,
            rho_used,
            phi_used,
            &state.f,
            state.options.nonlinear_terms,
        )?;
        if let Some(extra) = extra_force {
            force.add_scaled(1.0, extra);
        }
        let owned;
        let incr: &[f64] = match increments {
            Some(v) => v,
            None => {
                owned = state.noise.draw_increments(&mut state.rng, dt);
                &owned
            }
        };
        let mut out = VectorField::zeros(grid);
        for (lambda, e) in basis.iter() {
            let alpha = crate::norms::l2_inner_vec(&state.u, e);
            let fcoef = crate::norms::l2_inner_vec(&force, e);
            let mut ncoef = 0.0;
            for (mode, dw) in state.noise.modes.iter().zip(incr) {
                ncoef += mode.amplitude * dw * crate::norms::l2_inner_vec(&mode.field, e);
            }
            let next = (alpha + dt * fcoef + ncoef) / (1.0 + dt * lambda);
            out.add_scaled(next, e);
        }
        out
    };

    check_finite(state, &new_u, &new_c)?;
    state.u = new_u;
    state.c = new_c;
    state.refresh_potential()?;
    state.t += dt;
    state.step_index += 1;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{ScalarField, VectorField};
    use crate::noise::NoiseSpec;
    use crate::norms;
    use crate::rngstream::RngStream;
    use crate::species::SpeciesParams;
    use crate::state::StepOptions;
    use approx::assert_relative_eq;

    fn torus_two_species(n: usize, perturb: f64) -> SystemState {
        let grid = Grid::torus(n, n).unwrap();
        let c1 = ScalarField::from_fn(grid, |x, _| 1.0 + perturb * x.cos());
        let c2 = ScalarField::from_fn(grid, |x, _| 1.0 + perturb * x.cos());
        SystemState::new(
            VectorField::zeros(grid),
            vec![c1, c2],
            vec![SpeciesParams::periodic(1.0, 1.0), SpeciesParams::periodic(1.0, -1.0)],
            0.0,
            VectorField::zeros(grid),
            NoiseSpec::zero(),
            RngStream::new(11, 0),
            StepOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn cfl_violation_is_rejected_with_suggestion() {
        let mut s = torus_two_species(16, 0.0);
        let err = step(&mut s, 1.0).unwrap_err();
        match err {
            Error::StepRejected { suggested_dt, .. } => assert!(suggested_dt < 1.0),
            other => panic!("unexpected error {other:?}"),
        }
        assert_eq!(s.step_index, 0);
    }

    #[test]
    fn torus_diffusion_matches_exact_per_mode_factor() {
        let mut s = torus_two_species(16, 1e-3);
        let dt = 0.01;
        let before = s.c[0].at(0, 0) - 1.0;
        step(&mut s, dt).unwrap();
        // With identical species the charge vanishes, the potential is zero,
        // the velocity stays zero, and the cosine mode contracts by exactly
        // 1/(1 + dt) per step.
        let after = s.c[0].at(0, 0) - 1.0;
        assert_relative_eq!(after, before / (1.0 + dt), max_relative = 1e-10);
        assert!(norms::l2_norm(&s.charge_density()) < 1e-14);
        assert_eq!(s.u.max_speed(), 0.0);
    }

    #[test]
    fn torus_species_means_are_conserved_exactly() {
        let grid = Grid::torus(32, 32).unwrap();
        let c1 = ScalarField::from_fn(grid, |x, y| 1.0 + 0.2 * x.cos() + 0.1 * (x + y).sin());
        let c2 = ScalarField::from_fn(grid, |x, y| 1.0 + 0.2 * x.cos() + 0.1 * (x + y).sin());
        let u0 = spectral::leray_project(&VectorField::from_fns(
            grid,
            |_, y| y.sin(),
            |x, _| x.sin(),
        ))
        .unwrap();
        let mut s = SystemState::new(
            u0,
            vec![c1, c2],
            vec![SpeciesParams::periodic(1.0, 1.0), SpeciesParams::periodic(2.0, -1.0)],
            0.0,
            VectorField::zeros(grid),
            NoiseSpec::torus_default(grid, 0.2).unwrap(),
            RngStream::new(3, 0),
            StepOptions::default(),
        )
        .unwrap();
        let m0: Vec<f64> = s.c.iter().map(|c| c.mean()).collect();
        for _ in 0..25 {
            step(&mut s, 0.01).unwrap();
        }
        for (c, m) in s.c.iter().zip(&m0) {
            assert!((c.mean() - m).abs() < 1e-13, "mean drift {:.3e}", (c.mean() - m).abs());
        }
        // Divergence-free invariant after repeated steps.
        let div = calculus::divergence(&s.u).unwrap();
        assert!(norms::l2_norm(&div) < 1e-10 * (1.0 + norms::l2_norm_vec(&s.u)));
    }

    #[test]
    fn shared_increments_reproduce_the_internal_draw() {
        let grid = Grid::torus(16, 16).unwrap();
        let make = || {
            let c1 = ScalarField::constant(grid, 1.0);
            let c2 = ScalarField::constant(grid, 1.0);
            SystemState::new(
                VectorField::zeros(grid),
                vec![c1, c2],
                vec![
                    SpeciesParams::periodic(1.0, 1.0),
                    SpeciesParams::periodic(1.0, -1.0),
                ],
                0.0,
                VectorField::zeros(grid),
                NoiseSpec::torus_default(grid, 0.5).unwrap(),
                RngStream::new(9, 4),
                StepOptions::default(),
            )
            .unwrap()
        };
        let dt = 0.01;
        let mut a = make();
        step(&mut a, dt).unwrap();

        let mut b = make();
        let incr = b.noise.draw_increments(&mut b.rng, dt);
        step_with_increments(&mut b, dt, &incr).unwrap();

        assert_eq!(a.u.x.values, b.u.x.values);
        assert_eq!(a.u.y.values, b.u.y.values);
    }

    #[test]
    fn square_steady_state_is_bitwise_stationary() {
        let grid = Grid::square(20, 20).unwrap();
        let c1 = ScalarField::constant(grid, 1.0);
        let c2 = ScalarField::constant(grid, 1.0);
        let mut s = SystemState::new(
            VectorField::zeros(grid),
            vec![c1, c2],
            vec![
                SpeciesParams::dirichlet(1.0, 1.0, 1.0),
                SpeciesParams::blocking(1.5, -1.0),
            ],
            0.25,
            VectorField::zeros(grid),
            NoiseSpec::zero(),
            RngStream::new(1, 0),
            StepOptions::default(),
        )
        .unwrap();
        let before_c: Vec<Vec<f64>> = s.c.iter().map(|c| c.values.clone()).collect();
        for _ in 0..5 {
            step(&mut s, 0.001).unwrap();
        }
        for (c, b) in s.c.iter().zip(&before_c) {
            assert_eq!(&c.values, b);
        }
        assert_eq!(s.u.max_speed(), 0.0);
        assert_eq!(s.phi.values, vec![0.25; grid.len()]);
    }

    #[test]
    fn square_blocking_species_conserves_mass_under_migration() {
        let grid = Grid::square(24, 24).unwrap();
        // Non-neutral pair drives a nontrivial potential and migration flux.
        let c1 = ScalarField::from_fn(grid, |x, y| {
            1.0 + 0.3 * (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin()
        });
        let c2 = ScalarField::constant(grid, 1.0);
        let mut s = SystemState::new(
            VectorField::zeros(grid),
            vec![c1, c2],
            vec![
                SpeciesParams::blocking(1.0, 1.0),
                SpeciesParams::blocking(1.0, -1.0),
            ],
            0.0,
            VectorField::zeros(grid),
            NoiseSpec::zero(),
            RngStream::new(2, 0),
            StepOptions::default(),
        )
        .unwrap();
        let mass0: Vec<f64> = s.c.iter().map(|c| c.integral()).collect();
        for _ in 0..20 {
            step(&mut s, 2e-4).unwrap();
        }
        for (c, m) in s.c.iter().zip(&mass0) {
            assert!((c.integral() - m).abs() < 1e-12 * m.abs().max(1.0));
        }
        // All concentrations stay positive for this smooth data.
        assert!(s.monitor.min_concentration_last > 0.0);
    }

    #[test]
    fn positivity_rejection_and_optional_clamp() {
        let grid = Grid::torus(16, 16).unwrap();
        // A concentration dipping near zero, strained by a sustained cellular
        // flow, develops underresolved filaments whose spectral undershoot
        // trips the positivity gate.
        let c1 = ScalarField::from_fn(grid, |x, _| 1.0 + 0.999 * x.cos());
        let c2 = c1.clone();
        let u0 = VectorField::from_fns(
            grid,
            |x, y| 0.9 * (x.cos() * y.sin()),
            |x, y| -0.9 * (x.sin() * y.cos()),
        );
        // f = -Laplacian u0 keeps the cellular flow an exact fixed point.
        let mut f = u0.clone();
        f.scale(2.0);
        let make = |clamp: bool| {
            SystemState::new(
                u0.clone(),
                vec![c1.clone(), c2.clone()],
                vec![
                    SpeciesParams::periodic(1e-4, 1.0),
                    SpeciesParams::periodic(1e-4, -1.0),
                ],
                0.0,
                f.clone(),
                NoiseSpec::zero(),
                RngStream::new(5, 0),
                StepOptions {
                    clamp_negative: clamp,
                    ..StepOptions::default()
                },
            )
            .unwrap()
        };
        // Find a dt small enough for CFL but big enough to overshoot.
        let mut rejected = None;
        let mut s = make(false);
        let mut dt = cfl_limit(&s) * 0.99;
        for _ in 0..200 {
            match step(&mut s, dt) {
                Ok(()) => {
                    dt = (cfl_limit(&s) * 0.99).min(dt);
                }
                Err(e) => {
                    rejected = Some(e);
                    break;
                }
            }
        }
        let err = rejected.expect("expected a positivity rejection");
        assert!(matches!(err, Error::StepRejected { .. }), "got {err:?}");
        let steps_before_reject = s.step_index;

        // Same trajectory with clamping enabled proceeds past the rejection
        // and records the event.
        let mut sc = make(true);
        let mut dt = cfl_limit(&sc) * 0.99;
        for _ in 0..=steps_before_reject {
            dt = (cfl_limit(&sc) * 0.99).min(dt);
            step(&mut sc, dt).unwrap();
        }
        assert!(sc.monitor.clamp_events > 0);
        assert!(sc.monitor.clamped_mass > 0.0);
    }

    #[test]
    fn advance_halves_dt_until_accepted() {
        let mut s = torus_two_species(16, 1e-3);
        let limit = cfl_limit(&s);
        let used = advance(&mut s, 8.0 * limit, 6).unwrap();
        assert!(used <= limit);
        assert_eq!(s.step_index, 1);
    }
}
