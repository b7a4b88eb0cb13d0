//! Successive-approximation solver: the electric coupling is frozen at the
//! previous sweep's fields, every sweep restarts from the same initial data
//! and consumes the same frozen noise increments, and the fixed point of the
//! sweep map is exactly the trajectory of the direct one-step integrator.
//!
//! Sweep `m` integrates the velocity with the electric force built from
//! sweep `m-1`'s charge and potential, then the concentration equations
//! (linear, since the potential is frozen) advected by sweep `m`'s own
//! velocity. Sweep 0 is the zero trajectory with zero potential.

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::norms;
use crate::state::SystemState;
use crate::step;

/// Outcome of a successive-approximation run.
#[derive(Debug)]
pub struct PicardReport {
    /// Trajectory distance between consecutive sweeps, one entry per sweep.
    pub distances: Vec<f64>,
    /// True when the last distance dropped to `tol` or below.
    pub converged: bool,
    /// End state of the final sweep.
    pub final_state: SystemState,
    /// Number of sweeps performed.
    pub sweeps: usize,
}

/// Supremum over time levels of the state-space distance
/// `sqrt(||du||^2 + sum_i ||dc_i||^2)`.
fn trajectory_distance(
    u_a: &[VectorField],
    c_a: &[Vec<ScalarField>],
    u_b: &[VectorField],
    c_b: &[Vec<ScalarField>],
) -> f64 {
    let mut sup: f64 = 0.0;
    for level in 0..u_a.len() {
        let mut d2 = norms::l2_norm_vec(&u_a[level].sub(&u_b[level])).powi(2);
        for (ca, cb) in c_a[level].iter().zip(&c_b[level]) {
            d2 += norms::l2_norm(&ca.sub(cb)).powi(2);
        }
        sup = sup.max(d2.sqrt());
    }
    sup
}

/// Runs up to `max_sweeps` successive-approximation sweeps over `[0, t_final]`
/// with uniform step `dt`, stopping early once consecutive sweeps agree to
/// `tol` in the supremum trajectory distance. The noise path is drawn once
/// from a clone of the initial state's stream, so a direct integration from
/// a clone of `initial` sees the identical increments.
pub fn picard_solve(
    initial: &SystemState,
    t_final: f64,
    dt: f64,
    max_sweeps: usize,
    tol: f64,
) -> Result<PicardReport> {
    if !(t_final > 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidArgument(
            "successive approximation needs positive t_final and dt".into(),
        ));
    }
    if max_sweeps == 0 {
        return Err(Error::InvalidArgument("at least one sweep is required".into()));
    }
    let n_steps = (t_final / dt).round() as usize;
    if n_steps == 0 || ((n_steps as f64) * dt - t_final).abs() > 1e-9 * t_final.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "t_final = {t_final} is not an integer multiple of dt = {dt}"
        )));
    }

    let grid = initial.grid;
    // One frozen noise path shared by every sweep.
    let mut path_rng = initial.rng.clone();
    let increments: Vec<Vec<f64>> = (0..n_steps)
        .map(|_| initial.noise.draw_increments(&mut path_rng, dt))
        .collect();

    // Sweep 0: identically zero trajectory, zero potential and charge.
    let zero_s = ScalarField::zeros(grid);
    let zero_v = VectorField::zeros(grid);
    let mut prev_phi = vec![zero_s.clone(); n_steps];
    let mut prev_rho = vec![zero_s.clone(); n_steps];
    let mut prev_u = vec![zero_v.clone(); n_steps + 1];
    let mut prev_c = vec![vec![zero_s.clone(); initial.c.len()]; n_steps + 1];

    let mut distances = Vec::with_capacity(max_sweeps);
    let mut converged = false;
    let mut last_state = initial.clone();

    for _sweep in 0..max_sweeps {
        let mut s = initial.clone();
        let mut cur_phi = Vec::with_capacity(n_steps);
        let mut cur_rho = Vec::with_capacity(n_steps);
        let mut cur_u = Vec::with_capacity(n_steps + 1);
        let mut cur_c = Vec::with_capacity(n_steps + 1);
        cur_u.push(s.u.clone());
        cur_c.push(s.c.clone());
        for inc in &increments {
            cur_phi.push(s.phi.clone());
            cur_rho.push(s.charge_density());
            let level = cur_phi.len() - 1;
            step::step_with_lagged_coupling(&mut s, dt, inc, &prev_phi[level], &prev_rho[level])?;
            cur_u.push(s.u.clone());
            cur_c.push(s.c.clone());
        }
        let d = trajectory_distance(&cur_u, &cur_c, &prev_u, &prev_c);
        distances.push(d);
        prev_phi = cur_phi;
        prev_rho = cur_rho;
        prev_u = cur_u;
        prev_c = cur_c;
        last_state = s;
        if d <= tol {
            converged = true;
            break;
        }
    }

    Ok(PicardReport {
        sweeps: distances.len(),
        distances,
        converged,
        final_state: last_state,
    })
}
