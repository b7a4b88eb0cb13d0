//! Scalar diagnostics: energies, relative entropy, the integration-by-parts
//! identities the coupled system satisfies, dissipation-balance residuals,
//! decay-rate fits, and the two-trajectory growth bound.
//!
//! Inner products and norms all use the grid quadrature from [`crate::norms`],
//! so identities that hold in exact arithmetic for band-limited torus fields
//! evaluate to round-off here.

use crate::calculus;
use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::norms;
use crate::series::ObservableSeries;
use crate::state::SystemState;

/// Concentration values below this are floored before taking logarithms.
pub const ENTROPY_FLOOR: f64 = 1e-14;

/// Safety factor in the two-trajectory growth assertion
/// `r(t) <= BOUND_FACTOR * exp(kappa(t))`, covering time-quadrature error.
pub const BOUND_FACTOR: f64 = 2.0;

/// `||u||^2_{L^2}`.
pub fn kinetic_energy(state: &SystemState) -> f64 {
    norms::l2_norm_vec(&state.u).powi(2)
}

/// `||grad Phi||^2_{L^2}` for the potential carried by the state.
pub fn potential_energy(state: &SystemState) -> Result<f64> {
    let grad = calculus::gradient(&state.phi)?;
    Ok(norms::l2_norm_vec(&grad).powi(2))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyResult {
    pub value: f64,
    /// Number of nodes whose concentration was floored before the log.
    pub floored_nodes: usize,
}

/// Relative entropy `sum_i integral(c_i log(c_i / mean_i) - c_i + mean_i)`,
/// nonnegative, zero exactly when every species is constant.
pub fn entropy(state: &SystemState) -> Result<EntropyResult> {
    let grid = state.grid;
    let mut total = 0.0;
    let mut floored = 0usize;
    for ci in &state.c {
        let mean = ci.mean();
        if !(mean > 0.0) {
            return Err(Error::Precondition(format!(
                "entropy needs a positive species mean, got {mean:.3e}"
            )));
        }
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let raw = ci.at(i, j);
                let c = if raw < ENTROPY_FLOOR {
                    floored += 1;
                    ENTROPY_FLOOR
                } else {
                    raw
                };
                total += (c * (c / mean).ln() - c + mean) * grid.quad_weight(i, j);
            }
        }
    }
    // The integrand is pointwise nonnegative; only round-off can dip below.
    Ok(EntropyResult {
        value: total.max(0.0),
        floored_nodes: floored,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CancellationResidual {
    /// `|<rho grad Phi, u> + <u . grad rho, Phi>| / (1 + ||u|| ||rho|| ||Phi||)`.
    pub residual: f64,
    /// Whether the input velocity is discretely divergence-free; the
    /// identity is only guaranteed when it is.
    pub divergence_ok: bool,
}

/// Residual of the electric-force/advection cancellation
/// `<rho grad Phi, u> + <(u . grad) rho, Phi> = 0`, which requires
/// `div u = 0`.
pub fn cancellation_residual_velocity(
    u: &VectorField,
    rho: &ScalarField,
    phi: &ScalarField,
) -> Result<CancellationResidual> {
    rho.require_same_grid(&u.x)?;
    phi.require_same_grid(&u.x)?;
    let grad_phi = calculus::gradient(phi)?;
    let grad_rho = calculus::gradient(rho)?;

    let force_term = norms::l2_inner(&rho.pointwise_mul(&grad_phi.x), &u.x)
        + norms::l2_inner(&rho.pointwise_mul(&grad_phi.y), &u.y);
    let advect_term = norms::l2_inner(&u.x.pointwise_mul(&grad_rho.x), phi)
        + norms::l2_inner(&u.y.pointwise_mul(&grad_rho.y), phi);

    let denom =
        1.0 + norms::l2_norm_vec(u) * norms::l2_norm(rho) * norms::l2_norm(phi);
    let div_norm = norms::l2_norm(&calculus::divergence(u)?);
    let divergence_ok = div_norm < 1e-8 * (1.0 + norms::h1_norm_sq_vec(u)?.sqrt());
    Ok(CancellationResidual {
        residual: (force_term + advect_term).abs() / denom,
        divergence_ok,
    })
}

/// Residual of the two-species migration identity
/// `<div(sigma grad Phi), rho> + <div(rho grad Phi), sigma> = -<rho^2, sigma>`,
/// valid when `-Delta Phi = rho`. Normalized by the participating terms.
pub fn two_species_identity_residual(
    rho: &ScalarField,
    sigma: &ScalarField,
    phi: &ScalarField,
) -> Result<f64> {
    sigma.require_same_grid(rho)?;
    phi.require_same_grid(rho)?;
    let grad_phi = calculus::gradient(phi)?;
    let flux = |w: &ScalarField| VectorField {
        x: w.pointwise_mul(&grad_phi.x),
        y: w.pointwise_mul(&grad_phi.y),
    };
    let lhs_sigma = norms::l2_inner(&calculus::divergence(&flux(sigma))?, rho);
    let lhs_rho = norms::l2_inner(&calculus::divergence(&flux(rho))?, sigma);
    let rhs = -norms::l2_inner(&rho.pointwise_mul(rho), sigma);
    let denom = 1.0 + lhs_sigma.abs() + lhs_rho.abs() + rhs.abs();
    Ok((lhs_sigma + lhs_rho - rhs).abs() / denom)
}

/// Energy/dissipation balance residuals for a stored two-species trajectory
/// with valences `(1, -1)`, equal diffusivities, and no forcing: per step,
/// `(E(t+dt) - E(t))/dt + D * (Diss(t) + Diss(t+dt))/2` where
/// `E = (||rho||^2 + ||sigma - mean||^2)/2` and
/// `Diss = ||grad rho||^2 + ||grad sigma||^2 + ||sqrt(sigma) rho||^2`.
/// First-order accurate, so the residual is `O(dt)`.
pub fn dissipation_balance_two_species(
    states: &[SystemState],
    run_id: &str,
) -> Result<ObservableSeries> {
    if states.len() < 2 {
        return Err(Error::InvalidArgument(
            "dissipation balance needs at least two snapshots".into(),
        ));
    }
    let first = &states[0];
    let valences_ok = first.params.len() == 2
        && first.params[0].valence == 1.0
        && first.params[1].valence == -1.0
        && first.params[0].diffusivity == first.params[1].diffusivity;
    if !valences_ok {
        return Err(Error::Precondition(
            "balance identity requires two species with valences (1, -1) and equal diffusivities"
                .into(),
        ));
    }
    if norms::l2_norm_vec(&first.f) != 0.0 || first.noise.l2_norm_sq() != 0.0 {
        return Err(Error::Precondition(
            "balance identity requires zero body force and zero noise".into(),
        ));
    }
    let diff = first.params[0].diffusivity;

    let energy_and_dissipation = |s: &SystemState| -> Result<(f64, f64)> {
        let rho = s.charge_density();
        let mut sigma = s.c[0].clone();
        sigma.add_scaled(1.0, &s.c[1]);
        let mut sigma_dev = sigma.clone();
        sigma_dev.shift(-sigma.mean());
        let energy =
            0.5 * (norms::l2_norm(&rho).powi(2) + norms::l2_norm(&sigma_dev).powi(2));
        let grad_rho = calculus::gradient(&rho)?;
        let grad_sigma = calculus::gradient(&sigma)?;
        let weighted = norms::l2_inner(&sigma.pointwise_mul(&rho), &rho);
        let dissipation = norms::l2_norm_vec(&grad_rho).powi(2)
            + norms::l2_norm_vec(&grad_sigma).powi(2)
            + weighted;
        Ok((energy, dissipation))
    };

    let mut series = ObservableSeries::new("dissipation_balance_residual", run_id);
    let (mut e_prev, mut d_prev) = energy_and_dissipation(&states[0])?;
    for w in states.windows(2) {
        let dt = w[1].t - w[0].t;
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(
                "snapshots must be strictly increasing in time".into(),
            ));
        }
        let (e_next, d_next) = energy_and_dissipation(&w[1])?;
        let residual = (e_next - e_prev) / dt + diff * 0.5 * (d_prev + d_next);
        series.push(w[1].t, residual)?;
        (e_prev, d_prev) = (e_next, d_next);
    }
    Ok(series)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// Negated least-squares slope of `log(value)` against `t`.
    pub rate: f64,
    pub r_squared: f64,
}

/// Fits an exponential decay rate over the samples with `t0 <= t <= t1`.
/// All windowed values must be positive.
pub fn fit_decay_rate(series: &ObservableSeries, window: (f64, f64)) -> Result<DecayFit> {
    let pts = series.window(window.0, window.1);
    if pts.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "decay fit window [{}, {}] holds {} samples, need at least 2",
            window.0,
            window.1,
            pts.len()
        )));
    }
    let mut logs = Vec::with_capacity(pts.len());
    for &(t, v) in &pts {
        if !(v > 0.0) {
            return Err(Error::Precondition(format!(
                "decay fit needs positive values; sample at t = {t} is {v:.3e}"
            )));
        }
        logs.push((t, v.ln()));
    }
    let n = logs.len() as f64;
    let t_mean = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let y_mean = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let mut stt = 0.0;
    let mut sty = 0.0;
    let mut syy = 0.0;
    for &(t, y) in &logs {
        stt += (t - t_mean) * (t - t_mean);
        sty += (t - t_mean) * (y - y_mean);
        syy += (y - y_mean) * (y - y_mean);
    }
    let slope = sty / stt;
    let ss_res: f64 = logs
        .iter()
        .map(|&(t, y)| {
            let fit = y_mean + slope * (t - t_mean);
            (y - fit) * (y - fit)
        })
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(DecayFit {
        rate: -slope,
        r_squared,
    })
}

/// `sum_i ||c_i - target_i||_{L^p}` along a stored trajectory, `p` even.
pub fn lp_decay_series(
    states: &[SystemState],
    p: u32,
    targets: &[f64],
    run_id: &str,
) -> Result<ObservableSeries> {
    if p < 2 || p % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "decay norms are defined for even p >= 2, got {p}"
        )));
    }
    let mut series = ObservableSeries::new(format!("l{p}_deviation"), run_id);
    for s in states {
        if targets.len() != s.c.len() {
            return Err(Error::InvalidArgument(format!(
                "{} targets for {} species",
                targets.len(),
                s.c.len()
            )));
        }
        let mut total = 0.0;
        for (ci, &target) in s.c.iter().zip(targets) {
            let mut dev = ci.clone();
            dev.shift(-target);
            total += norms::lp_norm(&dev, p as f64)?;
        }
        series.push(s.t, total)?;
    }
    Ok(series)
}

#[derive(Debug, Clone)]
pub struct LipschitzReport {
    /// `r(t)`: squared state distance normalized by its initial value.
    pub ratio: ObservableSeries,
    /// `kappa(t)`: running trapezoid quadrature of the norm integrand below.
    /// The growth bound itself is `exp(kappa)`, which overflows a double for
    /// order-one fields, so it is recorded and compared in log form.
    pub log_bound: ObservableSeries,
    /// True when `log r(t) <= log(BOUND_FACTOR) + kappa(t)` at every sample.
    pub within_bound: bool,
    /// Largest observed `log(r) - log(BOUND_FACTOR) - kappa`; nonpositive
    /// when the bound holds.
    pub worst_log_margin: f64,
    /// Set when the initial states coincide, making `r` undefined (0/0).
    pub exact_match: bool,
}

/// Squared `L^2` state distance `||u1 - u2||^2 + sum_i ||c1_i - c2_i||^2`.
fn state_distance_sq(a: &SystemState, b: &SystemState) -> f64 {
    let mut d = norms::l2_norm_vec(&a.u.sub(&b.u)).powi(2);
    for (ca, cb) in a.c.iter().zip(&b.c) {
        d += norms::l2_norm(&ca.sub(cb)).powi(2);
    }
    d
}

/// Growth integrand: squared and fourth-power concentration norms of the
/// first trajectory, fourth-power `L^4` concentration norms, the squared
/// max of `|grad Phi|`, and the squared velocity gradient of the second.
fn growth_integrand(s1: &SystemState, s2: &SystemState) -> Result<f64> {
    let mut total = 0.0;
    for c in &s1.c {
        let l2 = norms::l2_norm(c);
        total += l2 * l2 + l2.powi(4);
    }
    for c in &s2.c {
        total += norms::lp_norm(c, 4.0)?.powi(4);
    }
    let grad_phi = calculus::gradient(&s2.phi)?;
    total += norms::lp_norm_vec(&grad_phi, f64::INFINITY)?.powi(2);
    total += norms::h_seminorm(&s2.u.x, 1)?.powi(2) + norms::h_seminorm(&s2.u.y, 1)?.powi(2);
    Ok(total)
}

/// Compares two trajectories that shared a noise path: the squared distance
/// ratio `r(t)` must stay below `BOUND_FACTOR * exp(kappa(t))`, where
/// `kappa` integrates [`growth_integrand`] in time.
pub fn lipschitz_growth_check(
    traj1: &[SystemState],
    traj2: &[SystemState],
    run_id: &str,
) -> Result<LipschitzReport> {
    if traj1.len() != traj2.len() || traj1.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "trajectory lengths {} and {} must match and hold at least 2 states",
            traj1.len(),
            traj2.len()
        )));
    }
    for (a, b) in traj1.iter().zip(traj2) {
        if (a.t - b.t).abs() > 1e-12 * (1.0 + a.t.abs()) {
            return Err(Error::InvalidArgument(format!(
                "trajectories sample different times: {} vs {}",
                a.t, b.t
            )));
        }
    }

    let d0 = state_distance_sq(&traj1[0], &traj2[0]);
    let mut ratio = ObservableSeries::new("distance_ratio", run_id);
    let mut log_bound = ObservableSeries::new("log_growth_bound", run_id);
    if d0 == 0.0 {
        return Ok(LipschitzReport {
            ratio,
            log_bound,
            within_bound: true,
            worst_log_margin: f64::NEG_INFINITY,
            exact_match: true,
        });
    }

    let mut kappa = 0.0;
    let mut prev_integrand = growth_integrand(&traj1[0], &traj2[0])?;
    let mut prev_t = traj1[0].t;
    let mut within = true;
    let mut worst = f64::NEG_INFINITY;
    for (k, (s1, s2)) in traj1.iter().zip(traj2).enumerate() {
        if k > 0 {
            let integrand = growth_integrand(s1, s2)?;
            kappa += 0.5 * (prev_integrand + integrand) * (s1.t - prev_t);
            (prev_integrand, prev_t) = (integrand, s1.t);
        }
        let r = state_distance_sq(s1, s2) / d0;
        ratio.push(s1.t, r)?;
        log_bound.push(s1.t, kappa)?;
        // r = 0 (an exact re-match downstream) satisfies any bound.
        let margin = if r > 0.0 {
            r.ln() - BOUND_FACTOR.ln() - kappa
        } else {
            f64::NEG_INFINITY
        };
        worst = worst.max(margin);
        if margin > 0.0 {
            within = false;
        }
    }
    Ok(LipschitzReport {
        ratio,
        log_bound,
        within_bound: within,
        worst_log_margin: worst,
        exact_match: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::noise::{self, NoiseSpec};
    use crate::poisson;
    use crate::rngstream::RngStream;
    use crate::species::SpeciesParams;
    use crate::state::StepOptions;
    use crate::step;

    fn neutral_pair_state(
        grid: Grid,
        c1: ScalarField,
        c2: ScalarField,
        u: VectorField,
        diffusivity: f64,
    ) -> SystemState {
        SystemState::new(
            u,
            vec![c1, c2],
            vec![
                SpeciesParams::periodic(diffusivity, 1.0),
                SpeciesParams::periodic(diffusivity, -1.0),
            ],
            0.0,
            VectorField::zeros(grid),
            NoiseSpec::zero(),
            RngStream::new(1, 0),
            StepOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn energies_match_closed_forms() {
        let grid = Grid::torus(48, 48).unwrap();
        let two_pi_sq = 2.0 * std::f64::consts::PI.powi(2);

        let u = VectorField::from_fns(grid, |_, y| y.cos(), |_, _| 0.0);
        let c1 = ScalarField::from_fn(grid, |x, _| 1.5 + x.cos());
        let c2 = ScalarField::constant(grid, 1.5);
        let s = neutral_pair_state(grid, c1, c2, u, 1.0);
        assert!((kinetic_energy(&s) - two_pi_sq).abs() < 1e-10);
        // rho = cos x gives Phi = cos x and grad Phi = (-sin x, 0).
        assert!((potential_energy(&s).unwrap() - two_pi_sq).abs() < 1e-9);

        let zero = neutral_pair_state(
            grid,
            ScalarField::constant(grid, 1.0),
            ScalarField::constant(grid, 1.0),
            VectorField::zeros(grid),
            1.0,
        );
        assert_eq!(kinetic_energy(&zero), 0.0);
        assert!(potential_energy(&zero).unwrap() < 1e-24);
    }

    #[test]
    fn entropy_is_nonnegative_zero_on_constants_and_matches_quadrature() {
        let grid = Grid::torus(64, 64).unwrap();
        let flat = neutral_pair_state(
            grid,
            ScalarField::constant(grid, 2.0),
            ScalarField::constant(grid, 2.0),
            VectorField::zeros(grid),
            1.0,
        );
        let e = entropy(&flat).unwrap();
        assert!(e.value >= 0.0 && e.value < 1e-12);
        assert_eq!(e.floored_nodes, 0);

        // Single uncharged species 1 + cos(x)/2; reference value from a
        // million-point 1D quadrature times the box width.
        let c = ScalarField::from_fn(grid, |x, _| 1.0 + 0.5 * x.cos());
        let s = SystemState::new(
            VectorField::zeros(grid),
            vec![c],
            vec![SpeciesParams::periodic(1.0, 0.0)],
            0.0,
            VectorField::zeros(grid),
            NoiseSpec::zero(),
            RngStream::new(1, 0),
            StepOptions::default(),
        )
        .unwrap();
        let e = entropy(&s).unwrap();
        let reference = 2.551_811_169_070_391;
        assert!(
            (e.value - reference).abs() < 1e-8 * reference,
            "entropy {} vs reference {reference}",
            e.value
        );
    }

    #[test]
    fn entropy_floors_touching_zero_and_flags_it() {
        let grid = Grid::torus(32, 32).unwrap();
        // 1 + cos x touches zero at x = pi (a grid node for even sizes).
        let c = ScalarField::from_fn(grid, |x, _| 1.0 + x.cos());
        let s = SystemState::new(
            VectorField::zeros(grid),
            vec![c],
            vec![SpeciesParams::periodic(1.0, 0.0)],
            0.0,
            VectorField::zeros(grid),
            NoiseSpec::zero(),
            RngStream::new(1, 0),
            StepOptions::default(),
        )
        .unwrap();
        let e = entropy(&s).unwrap();
        assert!(e.floored_nodes > 0);
        assert!(e.value > 0.0 && e.value.is_finite());
    }

    fn random_band_limited(grid: Grid, rng: &mut RngStream, band: i64) -> ScalarField {
        let mut f = ScalarField::zeros(grid);
        for kx in -band..=band {
            for ky in 0..=band {
                if ky == 0 && kx <= 0 {
                    continue;
                }
                let (a, b) = (rng.normal(), rng.normal());
                let (kxf, kyf) = (kx as f64, ky as f64);
                for j in 0..grid.ny {
                    for i in 0..grid.nx {
                        let phase = kxf * grid.node_x(i) + kyf * grid.node_y(j);
                        *f.at_mut(i, j) += a * phase.cos() + b * phase.sin();
                    }
                }
            }
        }
        f
    }

    #[test]
    fn cancellation_vanishes_for_divergence_free_velocity() {
        let grid = Grid::torus(64, 64).unwrap();
        let mut rng = RngStream::new(99, 0);
        let rho = random_band_limited(grid, &mut rng, 4);
        let phi = poisson::solve_poisson_periodic(&rho).unwrap();
        let basis = noise::torus_divfree_basis(grid, 12).unwrap();
        let mut u = VectorField::zeros(grid);
        for e in &basis {
            u.add_scaled(rng.normal(), e);
        }
        let out = cancellation_residual_velocity(&u, &rho, &phi).unwrap();
        assert!(out.divergence_ok);
        assert!(out.residual < 1e-12, "residual {:.3e}", out.residual);

        assert_eq!(
            cancellation_residual_velocity(&VectorField::zeros(grid), &rho, &phi)
                .unwrap()
                .residual,
            0.0
        );
    }

    #[test]
    fn cancellation_flags_gradient_velocity() {
        let grid = Grid::torus(48, 48).unwrap();
        // rho * Phi contains a sin(x) harmonic, so the defect integral
        // -<rho Phi, div u> does not vanish by parity.
        let rho = ScalarField::from_fn(grid, |x, _| x.cos() + (2.0 * x).sin());
        let phi = poisson::solve_poisson_periodic(&rho).unwrap();
        // u = grad(sin x) is curl-free, not divergence-free.
        let u = VectorField::from_fns(grid, |x, _| x.cos(), |_, _| 0.0);
        let out = cancellation_residual_velocity(&u, &rho, &phi).unwrap();
        assert!(!out.divergence_ok);
        assert!(out.residual > 1e-3, "residual {:.3e}", out.residual);
    }

    #[test]
    fn two_species_identity_closed_form_and_random() {
        let grid = Grid::torus(64, 64).unwrap();
        let rho = ScalarField::from_fn(grid, |x, _| x.cos());
        let sigma = ScalarField::constant(grid, 1.0);
        let phi = poisson::solve_poisson_periodic(&rho).unwrap();
        let r = two_species_identity_residual(&rho, &sigma, &phi).unwrap();
        assert!(r < 1e-12, "residual {r:.3e}");

        let mut rng = RngStream::new(12, 0);
        let rho = random_band_limited(grid, &mut rng, 4);
        let mut sigma = random_band_limited(grid, &mut rng, 4);
        let low = sigma.min();
        sigma.shift(1.0 - low.min(0.0));
        let phi = poisson::solve_poisson_periodic(&rho).unwrap();
        let r = two_species_identity_residual(&rho, &sigma, &phi).unwrap();
        assert!(r < 1e-10, "residual {r:.3e}");
    }

    fn stored_diffusion_run(dt: f64, n_steps: usize) -> Vec<SystemState> {
        let grid = Grid::torus(32, 32).unwrap();
        let c1 = ScalarField::from_fn(grid, |x, y| 1.0 + 0.3 * x.cos() + 0.1 * (x + y).sin());
        let c2 = ScalarField::from_fn(grid, |x, _| 1.0 + 0.2 * x.sin());
        let u0 = crate::spectral::leray_project(&VectorField::from_fns(
            grid,
            |x, y| 0.2 * x.cos() * y.sin(),
            |x, y| -0.2 * x.sin() * y.cos(),
        ))
        .unwrap();
        let mut s = neutral_pair_state(grid, c1, c2, u0, 1.0);
        let mut out = vec![s.clone()];
        for _ in 0..n_steps {
            step::step(&mut s, dt).unwrap();
            out.push(s.clone());
        }
        out
    }

    #[test]
    fn dissipation_residual_is_first_order_in_dt() {
        let coarse = stored_diffusion_run(2e-3, 25);
        let fine = stored_diffusion_run(1e-3, 50);
        let max_res = |states: &[SystemState]| {
            dissipation_balance_two_species(states, "test")
                .unwrap()
                .samples()
                .iter()
                .fold(0.0f64, |m, &(_, v)| m.max(v.abs()))
        };
        let (rc, rf) = (max_res(&coarse), max_res(&fine));
        let ratio = rc / rf;
        assert!(
            (1.6..=2.4).contains(&ratio),
            "coarse {rc:.3e}, fine {rf:.3e}, ratio {ratio:.3}"
        );
    }

    #[test]
    fn steady_sequence_has_zero_residual() {
        let grid = Grid::torus(16, 16).unwrap();
        let flat = neutral_pair_state(
            grid,
            ScalarField::constant(grid, 1.0),
            ScalarField::constant(grid, 1.0),
            VectorField::zeros(grid),
            1.0,
        );
        let mut later = flat.clone();
        later.t = 0.5;
        let series = dissipation_balance_two_species(&[flat, later], "steady").unwrap();
        assert!(series.samples()[0].1.abs() < 1e-12);
    }

    #[test]
    fn decay_fit_recovers_synthetic_rates() {
        let series = ObservableSeries::from_samples(
            "synthetic",
            "r",
            (0..100).map(|i| {
                let t = i as f64 * 0.05;
                (t, (-3.0 * t).exp())
            }),
        )
        .unwrap();
        let fit = fit_decay_rate(&series, (0.0, 5.0)).unwrap();
        assert!((fit.rate - 3.0).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);

        let flat = ObservableSeries::from_samples(
            "const",
            "r",
            (0..10).map(|i| (i as f64, 2.0)),
        )
        .unwrap();
        let fit = fit_decay_rate(&flat, (0.0, 9.0)).unwrap();
        assert_eq!(fit.rate, 0.0);

        let negative = ObservableSeries::from_samples("bad", "r", [(0.0, 1.0), (1.0, -0.5)]).unwrap();
        assert!(fit_decay_rate(&negative, (0.0, 1.0)).is_err());
    }

    #[test]
    fn lp_series_requires_even_p_and_decreases_under_diffusion() {
        let states = stored_diffusion_run(2e-3, 25);
        assert!(lp_decay_series(&states, 3, &[1.0, 1.0], "r").is_err());
        let series = lp_decay_series(&states, 4, &[1.0, 1.0], "r").unwrap();
        let vals = series.samples();
        assert!(vals.last().unwrap().1 < vals[0].1);
    }

    #[test]
    fn growth_check_synthetic_ratio_recovery() {
        let grid = Grid::torus(16, 16).unwrap();
        let make = |amp: f64, t: f64| {
            let mut s = neutral_pair_state(
                grid,
                ScalarField::constant(grid, 1.0),
                ScalarField::constant(grid, 1.0),
                VectorField::from_fns(grid, move |_, y| amp * y.cos(), |_, _| 0.0),
                1.0,
            );
            s.t = t;
            s
        };
        // Distance halves each sample; r should be (1/4)^k exactly.
        let traj1: Vec<_> = (0..4).map(|k| make(2.0 * 0.5f64.powi(k), k as f64 * 0.1)).collect();
        let traj2: Vec<_> = (0..4).map(|k| make(0.5f64.powi(k), k as f64 * 0.1)).collect();
        let report = lipschitz_growth_check(&traj1, &traj2, "synthetic").unwrap();
        assert!(!report.exact_match);
        for (k, &(_, r)) in report.ratio.samples().iter().enumerate() {
            let expect = 0.25f64.powi(k as i32);
            assert!((r - expect).abs() < 1e-12 * expect.max(1e-30));
        }
        assert!(report.within_bound);
    }

    #[test]
    fn growth_check_contraction_run_stays_within_bound() {
        let run = |bump: f64| -> Vec<SystemState> {
            let grid = Grid::torus(24, 24).unwrap();
            let c1 = ScalarField::from_fn(grid, move |x, _| 1.0 + (0.1 + bump) * x.cos());
            let c2 = ScalarField::from_fn(grid, |_, y| 1.0 + 0.1 * y.cos());
            let mut s = neutral_pair_state(grid, c1, c2, VectorField::zeros(grid), 1.0);
            let mut out = vec![s.clone()];
            for _ in 0..30 {
                step::step(&mut s, 0.01).unwrap();
                out.push(s.clone());
            }
            out
        };
        let report = lipschitz_growth_check(&run(0.0), &run(0.05), "pair").unwrap();
        assert!(report.within_bound, "worst margin {:.3}", report.worst_log_margin);
        // Diffusion-dominated: the gap contracts.
        let last = report.ratio.samples().last().unwrap().1;
        assert!(last < 1.0, "final ratio {last}");

        let traj = run(0.0);
        let same = lipschitz_growth_check(&traj, &traj, "same").unwrap();
        assert!(same.exact_match);
    }
}
