//! Statistical layer: time averages along paths, long-horizon averaging
//! experiments with common random numbers, coupled-pair contraction runs,
//! empirical Wasserstein distances on observable marginals, and ensemble
//! moment monitors.
//!
//! Every experiment derives one random stream per path from
//! `(master_seed, path_index)`, runs paths in parallel, and reduces results
//! in path order, so reports are bitwise reproducible regardless of the
//! thread schedule.

use crate::error::{Error, Result};
use crate::norms;
use crate::observables::{self, DecayFit};
use crate::rngstream::RngStream;
use crate::series::ObservableSeries;
use crate::shadow::{self, ShadowRunner};
use crate::state::SystemState;
use crate::step;
use crate::stokes;
use crate::grid::Domain;
use rayon::prelude::*;

/// `(1/T) * integral_0^T series dt` by the trapezoid rule. The series must
/// start at `t <= 0` and reach `t >= T`; the final segment is interpolated
/// linearly when a sample overshoots `T`.
pub fn time_average(series: &ObservableSeries, t_final: f64) -> Result<f64> {
    if !(t_final > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "averaging horizon must be positive, got {t_final}"
        )));
    }
    let samples = series.samples();
    let first = series.first_t().ok_or_else(|| {
        Error::InvalidArgument(format!("series '{}' is empty", series.name))
    })?;
    let last = series.last_t().unwrap();
    if first > 1e-12 || last < t_final - 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "series '{}' spans [{first}, {last}], not [0, {t_final}]",
            series.name
        )));
    }
    let mut integral = 0.0;
    for w in samples.windows(2) {
        let (t0, v0) = w[0];
        let (t1, v1) = w[1];
        if t0 >= t_final {
            break;
        }
        if t1 <= t_final {
            integral += 0.5 * (v0 + v1) * (t1 - t0);
        } else {
            // Interpolate the value at T and close the last trapezoid there.
            let v_at = v0 + (v1 - v0) * (t_final - t0) / (t1 - t0);
            integral += 0.5 * (v0 + v_at) * (t_final - t0);
        }
    }
    Ok(integral / t_final)
}

/// Scalar observables the averaging experiments track.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarObservable {
    /// `||u||^2_{L^2}`.
    KineticEnergy,
    /// `||rho||^2_{L^2}`.
    ChargeSq,
    /// `sum_i ||c_i - mean_i||^2_{L^2}`.
    ConcentrationDeviationSq,
    /// Relative entropy of the concentrations.
    Entropy,
}

pub const KB_OBSERVABLES: [ScalarObservable; 4] = [
    ScalarObservable::KineticEnergy,
    ScalarObservable::ChargeSq,
    ScalarObservable::ConcentrationDeviationSq,
    ScalarObservable::Entropy,
];

impl ScalarObservable {
    pub fn name(&self) -> &'static str {
        match self {
            ScalarObservable::KineticEnergy => "kinetic_energy",
            ScalarObservable::ChargeSq => "charge_sq",
            ScalarObservable::ConcentrationDeviationSq => "concentration_deviation_sq",
            ScalarObservable::Entropy => "entropy",
        }
    }

    pub fn eval(&self, state: &SystemState) -> Result<f64> {
        match self {
            ScalarObservable::KineticEnergy => Ok(observables::kinetic_energy(state)),
            ScalarObservable::ChargeSq => {
                Ok(norms::l2_norm(&state.charge_density()).powi(2))
            }
            ScalarObservable::ConcentrationDeviationSq => {
                let mut total = 0.0;
                for ci in &state.c {
                    let mut dev = ci.clone();
                    dev.shift(-ci.mean());
                    total += norms::l2_norm(&dev).powi(2);
                }
                Ok(total)
            }
            ScalarObservable::Entropy => Ok(observables::entropy(state)?.value),
        }
    }
}

fn eval_kb_observables(state: &SystemState) -> Result<[f64; 4]> {
    let mut out = [0.0; 4];
    for (slot, obs) in out.iter_mut().zip(KB_OBSERVABLES) {
        *slot = obs.eval(state)?;
    }
    Ok(out)
}

/// Across-initial-state comparison of time-averaged observables.
#[derive(Debug, Clone)]
pub struct KbReport {
    pub master_seed: u64,
    pub n_paths: usize,
    pub t_list: Vec<f64>,
    pub observable_names: [&'static str; 4],
    /// Path-averaged time averages per horizon, first initial state.
    pub mu_first: Vec<[f64; 4]>,
    /// Same for the second initial state.
    pub mu_second: Vec<[f64; 4]>,
    /// `|mu_first - mu_second|` per horizon and observable.
    pub discrepancy: Vec<[f64; 4]>,
    /// Scale for relative comparisons: the two states' averages at the
    /// longest horizon, averaged.
    pub reference: [f64; 4],
}

/// Number of steps to reach `t`, requiring alignment to the step size.
fn aligned_steps(t: f64, dt: f64) -> Result<usize> {
    let n = (t / dt).round();
    if n < 1.0 || (n * dt - t).abs() > 1e-9 * t.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "horizon {t} is not a positive multiple of dt = {dt}"
        )));
    }
    Ok(n as usize)
}

/// Integrates one path and returns the running time averages of the four
/// tracked observables at each checkpoint step count.
fn kb_path(
    initial: &SystemState,
    stream: RngStream,
    checks: &[usize],
    dt: f64,
) -> Result<Vec<[f64; 4]>> {
    let mut s = initial.clone();
    s.rng = stream;
    let mut acc = [0.0f64; 4];
    let mut prev = eval_kb_observables(&s)?;
    let mut out = Vec::with_capacity(checks.len());
    let last = *checks.last().unwrap();
    let mut check_iter = checks.iter().copied().peekable();
    for n in 1..=last {
        step::step(&mut s, dt)?;
        let cur = eval_kb_observables(&s)?;
        for k in 0..4 {
            acc[k] += 0.5 * (prev[k] + cur[k]) * dt;
        }
        prev = cur;
        if check_iter.peek() == Some(&n) {
            check_iter.next();
            let horizon = n as f64 * dt;
            out.push([
                acc[0] / horizon,
                acc[1] / horizon,
                acc[2] / horizon,
                acc[3] / horizon,
            ]);
        }
    }
    Ok(out)
}

/// Runs `n_paths` noise paths from each of two initial states under common
/// random numbers and compares their time-averaged observables at every
/// horizon in `t_list` (strictly increasing). Assertions about the trend
/// belong to callers; this emits the statistics.
pub fn kb_convergence_experiment(
    initial_first: &SystemState,
    initial_second: &SystemState,
    t_list: &[f64],
    dt: f64,
    n_paths: usize,
    master_seed: u64,
) -> Result<KbReport> {
    if t_list.is_empty() || n_paths == 0 {
        return Err(Error::InvalidArgument(
            "need at least one horizon and one path".into(),
        ));
    }
    if !t_list.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidArgument(
            "averaging horizons must be strictly increasing".into(),
        ));
    }
    if initial_first.grid != initial_second.grid
        || initial_first.noise.modes.len() != initial_second.noise.modes.len()
    {
        return Err(Error::InvalidArgument(
            "the two initial states must share grid and noise layout".into(),
        ));
    }
    let checks: Vec<usize> = t_list
        .iter()
        .map(|&t| aligned_steps(t, dt))
        .collect::<Result<_>>()?;

    let per_path: Vec<(Vec<[f64; 4]>, Vec<[f64; 4]>)> = (0..n_paths)
        .into_par_iter()
        .map(|p| -> Result<_> {
            // Common random numbers: both states ride the same stream.
            let stream = RngStream::new(master_seed, p as u64);
            let a = kb_path(initial_first, stream.clone(), &checks, dt)?;
            let b = kb_path(initial_second, stream, &checks, dt)?;
            Ok((a, b))
        })
        .collect::<Result<_>>()?;

    let mut mu_first = vec![[0.0; 4]; checks.len()];
    let mut mu_second = vec![[0.0; 4]; checks.len()];
    for (a, b) in &per_path {
        for ti in 0..checks.len() {
            for k in 0..4 {
                mu_first[ti][k] += a[ti][k] / n_paths as f64;
                mu_second[ti][k] += b[ti][k] / n_paths as f64;
            }
        }
    }
    let mut discrepancy = vec![[0.0; 4]; checks.len()];
    for ti in 0..checks.len() {
        for k in 0..4 {
            discrepancy[ti][k] = (mu_first[ti][k] - mu_second[ti][k]).abs();
        }
    }
    let top = checks.len() - 1;
    let mut reference = [0.0; 4];
    for k in 0..4 {
        reference[k] = 0.5 * (mu_first[top][k] + mu_second[top][k]);
    }
    Ok(KbReport {
        master_seed,
        n_paths,
        t_list: t_list.to_vec(),
        observable_names: [
            KB_OBSERVABLES[0].name(),
            KB_OBSERVABLES[1].name(),
            KB_OBSERVABLES[2].name(),
            KB_OBSERVABLES[3].name(),
        ],
        mu_first,
        mu_second,
        discrepancy,
        reference,
    })
}

/// Outcome of one coupled pair of paths.
#[derive(Debug, Clone)]
pub struct PathOutcome {
    pub q_initial: f64,
    /// Final pair energy; `None` when the path failed numerically.
    pub q_final: Option<f64>,
    pub contracted: bool,
    pub fired: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct CouplingReport {
    pub master_seed: u64,
    pub lambda: f64,
    pub n_modes: usize,
    pub budget: f64,
    pub threshold: f64,
    pub outcomes: Vec<PathOutcome>,
    pub fraction_contracted: f64,
    pub fraction_fired: f64,
    /// Pair energy along the first path, for inspection and plotting.
    pub q_series_path0: ObservableSeries,
}

/// Pair energy: velocity gap plus, for a (1, -1) two-species pair, the
/// charge gap, total-concentration gap, and potential-gradient gap; for any
/// other species layout, the plain sum of concentration gaps.
fn coupling_energy(a: &SystemState, b: &SystemState) -> Result<f64> {
    let mut q = norms::l2_norm_vec(&a.u.sub(&b.u)).powi(2);
    let two_species = a.params.len() == 2
        && a.params[0].valence == 1.0
        && a.params[1].valence == -1.0;
    if two_species {
        let rho = a.charge_density().sub(&b.charge_density());
        // Summing per-species differences keeps an identical pair at an
        // exact zero, which plain field accumulation would not.
        let mut sigma = a.c[0].sub(&b.c[0]);
        sigma.add_scaled(1.0, &a.c[1].sub(&b.c[1]));
        let psi = a.phi.sub(&b.phi);
        let grad_psi = crate::calculus::gradient(&psi)?;
        q += norms::l2_norm(&rho).powi(2)
            + norms::l2_norm(&sigma).powi(2)
            + norms::l2_norm_vec(&grad_psi).powi(2);
    } else {
        for (ca, cb) in a.c.iter().zip(&b.c) {
            q += norms::l2_norm(&ca.sub(cb)).powi(2);
        }
    }
    Ok(q)
}

/// Runs primary/companion pairs under shared noise with the partial-velocity
/// feedback and reports contraction statistics. A numerically failed path is
/// recorded in its outcome, not fatal to the experiment.
#[allow(clippy::too_many_arguments)]
pub fn coupling_experiment(
    initial_primary: &SystemState,
    initial_companion: &SystemState,
    lambda: f64,
    n_modes: usize,
    budget: f64,
    t_final: f64,
    dt: f64,
    n_paths: usize,
    threshold: f64,
    master_seed: u64,
) -> Result<CouplingReport> {
    if initial_primary.grid != initial_companion.grid
        || initial_primary.params.len() != initial_companion.params.len()
        || initial_primary.noise.descriptor != initial_companion.noise.descriptor
    {
        return Err(Error::InvalidArgument(
            "primary and companion must share grid, species count, and noise".into(),
        ));
    }
    let n_steps = aligned_steps(t_final, dt)?;
    let grid = initial_primary.grid;
    let basis = match grid.domain {
        Domain::Torus2Pi => crate::noise::torus_divfree_basis(grid, n_modes)?,
        Domain::UnitSquareDirichlet => stokes::stokes_eigenmodes(
            grid,
            n_modes,
            initial_primary.options.cache_dir.as_deref(),
        )?
        .into_iter()
        .map(|(_, field)| field)
        .collect(),
    };

    let paths: Vec<(PathOutcome, Option<ObservableSeries>)> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut stream = RngStream::new(master_seed, p as u64);
            let mut primary = initial_primary.clone();
            let mut companion = initial_companion.clone();
            let mut runner = match ShadowRunner::new(basis.clone(), lambda, budget) {
                Ok(r) => r,
                Err(e) => {
                    return (
                        PathOutcome {
                            q_initial: 0.0,
                            q_final: None,
                            contracted: false,
                            fired: false,
                            error: Some(e.to_string()),
                        },
                        None,
                    )
                }
            };
            let q0 = match coupling_energy(&primary, &companion) {
                Ok(q) => q,
                Err(e) => {
                    return (
                        PathOutcome {
                            q_initial: f64::NAN,
                            q_final: None,
                            contracted: false,
                            fired: false,
                            error: Some(e.to_string()),
                        },
                        None,
                    )
                }
            };
            let mut series = if p == 0 {
                let mut s = ObservableSeries::new("pair_energy", format!("path{p}"));
                s.push(0.0, q0).ok();
                Some(s)
            } else {
                None
            };
            let mut q_last = q0;
            let mut failure: Option<String> = None;
            for k in 0..n_steps {
                let incr = primary.noise.draw_increments(&mut stream, dt);
                let u_old = primary.u.clone();
                let advanced = step::step_with_increments(&mut primary, dt, &incr)
                    .and_then(|_| {
                        shadow::shadow_step(&mut runner, &u_old, &mut companion, dt, &incr)
                    })
                    .and_then(|_| coupling_energy(&primary, &companion));
                match advanced {
                    Ok(q) => {
                        q_last = q;
                        if let Some(s) = series.as_mut() {
                            s.push((k + 1) as f64 * dt, q).ok();
                        }
                    }
                    Err(e) => {
                        failure = Some(e.to_string());
                        break;
                    }
                }
            }
            let ok = failure.is_none();
            (
                PathOutcome {
                    q_initial: q0,
                    q_final: ok.then_some(q_last),
                    contracted: ok && q_last <= threshold * q0,
                    fired: runner.fired,
                    error: failure,
                },
                series,
            )
        })
        .collect();

    let outcomes: Vec<PathOutcome> = paths.iter().map(|(o, _)| o.clone()).collect();
    let q_series_path0 = paths
        .into_iter()
        .next()
        .and_then(|(_, s)| s)
        .unwrap_or_else(|| ObservableSeries::new("pair_energy", "path0"));
    let contracted = outcomes.iter().filter(|o| o.contracted).count();
    let fired = outcomes.iter().filter(|o| o.fired).count();
    Ok(CouplingReport {
        master_seed,
        lambda,
        n_modes,
        budget,
        threshold,
        fraction_contracted: contracted as f64 / n_paths as f64,
        fraction_fired: fired as f64 / n_paths as f64,
        outcomes,
        q_series_path0,
    })
}

/// First Wasserstein distance between two empirical distributions on the
/// line: the mean absolute difference of matched quantiles. Equal-length
/// inputs pair sorted samples directly; unequal lengths are matched at the
/// `min(n, m)` midpoint quantiles.
pub fn empirical_wasserstein_1d(samples_a: &[f64], samples_b: &[f64]) -> Result<f64> {
    if samples_a.is_empty() || samples_b.is_empty() {
        return Err(Error::InvalidArgument(
            "empirical distance needs nonempty samples".into(),
        ));
    }
    let mut a = samples_a.to_vec();
    let mut b = samples_b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let m = a.len().min(b.len());
    let quantile = |s: &[f64], i: usize| s[((2 * i + 1) * s.len()) / (2 * m)];
    let mut total = 0.0;
    for i in 0..m {
        total += (quantile(&a, i) - quantile(&b, i)).abs();
    }
    Ok(total / m as f64)
}

#[derive(Debug, Clone)]
pub struct ExpErgoReport {
    pub master_seed: u64,
    pub n_paths: usize,
    /// `W1(law(phi(X_t)), reference)` over the requested time grid.
    pub w_series: ObservableSeries,
    /// Exponential fit of `W(t)`; `None` when a window value hits zero.
    pub fit: Option<DecayFit>,
    /// Sampling noise floor: the distance between two disjoint halves of the
    /// reference sample set.
    pub noise_floor: f64,
}

/// Measures the decay of the observable-marginal Wasserstein distance
/// between the law at time `t` (fresh paths from `initial`) and a long-run
/// reference law (paths from the same state run to `reference_t`). This is
/// a marginal proxy for the state-space metric, reported as such.
#[allow(clippy::too_many_arguments)]
pub fn exp_ergodicity_experiment(
    initial: &SystemState,
    observable: ScalarObservable,
    t_grid: &[f64],
    dt: f64,
    n_paths: usize,
    reference_t: f64,
    master_seed: u64,
) -> Result<ExpErgoReport> {
    if n_paths < 100 {
        return Err(Error::Underpowered(format!(
            "{n_paths} paths; marginal distances need at least 100"
        )));
    }
    if t_grid.is_empty() || !t_grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidArgument(
            "time grid must be nonempty and strictly increasing".into(),
        ));
    }
    let ref_steps = aligned_steps(reference_t, dt)?;
    let checks: Vec<usize> = t_grid
        .iter()
        .map(|&t| aligned_steps(t, dt))
        .collect::<Result<_>>()?;
    if *checks.last().unwrap() > ref_steps {
        return Err(Error::InvalidArgument(
            "reference horizon must dominate the time grid".into(),
        ));
    }

    // Long-run reference samples, one per path.
    let reference: Vec<f64> = (0..n_paths)
        .into_par_iter()
        .map(|p| -> Result<f64> {
            let mut s = initial.clone();
            s.rng = RngStream::new(master_seed, p as u64);
            for _ in 0..ref_steps {
                step::step(&mut s, dt)?;
            }
            observable.eval(&s)
        })
        .collect::<Result<_>>()?;

    // Fresh paths from the initial state, sampled on the time grid.
    let fresh: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|p| -> Result<Vec<f64>> {
            let mut s = initial.clone();
            s.rng = RngStream::new(master_seed, (n_paths + p) as u64);
            let mut vals = Vec::with_capacity(checks.len());
            let mut check_iter = checks.iter().copied().peekable();
            for n in 1..=*checks.last().unwrap() {
                step::step(&mut s, dt)?;
                if check_iter.peek() == Some(&n) {
                    check_iter.next();
                    vals.push(observable.eval(&s)?);
                }
            }
            Ok(vals)
        })
        .collect::<Result<_>>()?;

    let half = n_paths / 2;
    let noise_floor = empirical_wasserstein_1d(&reference[..half], &reference[half..])?;

    let mut w_series = ObservableSeries::new(
        format!("w1_{}", observable.name()),
        format!("seed{master_seed}"),
    );
    for (ti, &t) in t_grid.iter().enumerate() {
        let marginal: Vec<f64> = fresh.iter().map(|path| path[ti]).collect();
        w_series.push(t, empirical_wasserstein_1d(&marginal, &reference)?)?;
    }
    let fit = observables::fit_decay_rate(&w_series, (t_grid[0], *t_grid.last().unwrap())).ok();
    Ok(ExpErgoReport {
        master_seed,
        n_paths,
        w_series,
        fit,
        noise_floor,
    })
}

/// Ensemble moment quantities with known growth envelopes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MomentQuantity {
    /// `||u||^2 + ||grad Phi||^2`.
    EnergyLinear,
    /// `(||u||^2 + ||grad Phi||^2)^2`.
    EnergyQuartic,
    /// `exp(eta * D_min * integral_0^t ||rho||^2 ds)`, `eta` caller-chosen.
    ChargeExp { eta: f64 },
    /// `||u||^2 + sum_i ||c_i - mean_i||^2`.
    TorusQuadratic,
    /// `log(1 + ||u||^2_{H^1})`.
    LogH1,
}

impl MomentQuantity {
    pub fn name(&self) -> &'static str {
        match self {
            MomentQuantity::EnergyLinear => "energy_linear",
            MomentQuantity::EnergyQuartic => "energy_quartic",
            MomentQuantity::ChargeExp { .. } => "charge_exp",
            MomentQuantity::TorusQuadratic => "torus_quadratic",
            MomentQuantity::LogH1 => "log_h1",
        }
    }

    /// Whether the growth envelope is fitted on `log E[q]` instead of `E[q]`.
    fn fit_on_log(&self) -> bool {
        matches!(self, MomentQuantity::ChargeExp { .. })
    }
}

#[derive(Debug, Clone)]
pub struct MomentReport {
    pub master_seed: u64,
    pub n_paths: usize,
    pub quantity_name: &'static str,
    /// Ensemble mean of the quantity at each sample time.
    pub mean_series: ObservableSeries,
    /// Least-squares slope of the mean (log-mean for the exponential
    /// quantity) against time, with its standard error from fit residuals.
    pub slope: f64,
    pub slope_se: f64,
    /// Ensemble mean and its standard error at the final time, for
    /// closed-form comparisons.
    pub final_mean: f64,
    pub final_se: f64,
}

fn least_squares_slope(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let t_mean = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let y_mean = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mut stt = 0.0;
    let mut sty = 0.0;
    for &(t, y) in pts {
        stt += (t - t_mean) * (t - t_mean);
        sty += (t - t_mean) * (y - y_mean);
    }
    let slope = sty / stt;
    let ss_res: f64 = pts
        .iter()
        .map(|&(t, y)| {
            let r = y - (y_mean + slope * (t - t_mean));
            r * r
        })
        .sum();
    let dof = (pts.len().max(3) - 2) as f64;
    (slope, (ss_res / dof / stt).sqrt())
}

/// Estimates `E[quantity](t)` over an ensemble and fits its growth slope.
#[allow(clippy::too_many_arguments)]
pub fn moment_monitor(
    initial: &SystemState,
    quantity: MomentQuantity,
    t_final: f64,
    dt: f64,
    sample_every: usize,
    n_paths: usize,
    master_seed: u64,
) -> Result<MomentReport> {
    if sample_every == 0 || n_paths < 2 {
        return Err(Error::InvalidArgument(
            "need sample_every >= 1 and at least 2 paths".into(),
        ));
    }
    let n_steps = aligned_steps(t_final, dt)?;
    if n_steps % sample_every != 0 {
        return Err(Error::InvalidArgument(format!(
            "{n_steps} steps do not divide into samples of {sample_every}"
        )));
    }

    let eval = |s: &SystemState, charge_integral: f64| -> Result<f64> {
        match quantity {
            MomentQuantity::EnergyLinear => {
                Ok(observables::kinetic_energy(s) + observables::potential_energy(s)?)
            }
            MomentQuantity::EnergyQuartic => {
                let e = observables::kinetic_energy(s) + observables::potential_energy(s)?;
                Ok(e * e)
            }
            MomentQuantity::ChargeExp { eta } => {
                let d_min = s
                    .params
                    .iter()
                    .map(|p| p.diffusivity)
                    .fold(f64::INFINITY, f64::min);
                Ok((eta * d_min * charge_integral).exp())
            }
            MomentQuantity::TorusQuadratic => {
                ScalarObservable::ConcentrationDeviationSq
                    .eval(s)
                    .map(|d| d + observables::kinetic_energy(s))
            }
            MomentQuantity::LogH1 => Ok((1.0 + norms::h1_norm_sq_vec(&s.u)?).ln()),
        }
    };

    let per_path: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|p| -> Result<Vec<f64>> {
            let mut s = initial.clone();
            s.rng = RngStream::new(master_seed, p as u64);
            let mut charge_integral = 0.0;
            let mut rho_sq_prev = norms::l2_norm(&s.charge_density()).powi(2);
            let mut vals = vec![eval(&s, charge_integral)?];
            for n in 1..=n_steps {
                step::step(&mut s, dt)?;
                let rho_sq = norms::l2_norm(&s.charge_density()).powi(2);
                charge_integral += 0.5 * (rho_sq_prev + rho_sq) * dt;
                rho_sq_prev = rho_sq;
                if n % sample_every == 0 {
                    vals.push(eval(&s, charge_integral)?);
                }
            }
            Ok(vals)
        })
        .collect::<Result<_>>()?;

    let n_samples = per_path[0].len();
    let mut mean_series = ObservableSeries::new(quantity.name(), format!("seed{master_seed}"));
    let mut fit_points = Vec::with_capacity(n_samples);
    for k in 0..n_samples {
        let t = (k * sample_every) as f64 * dt;
        let mean = per_path.iter().map(|v| v[k]).sum::<f64>() / n_paths as f64;
        mean_series.push(t, mean)?;
        if quantity.fit_on_log() {
            if !(mean > 0.0) {
                return Err(Error::Precondition(format!(
                    "log fit needs positive means, got {mean:.3e} at t = {t}"
                )));
            }
            fit_points.push((t, mean.ln()));
        } else {
            fit_points.push((t, mean));
        }
    }
    let (slope, slope_se) = least_squares_slope(&fit_points);

    let finals: Vec<f64> = per_path.iter().map(|v| v[n_samples - 1]).collect();
    let final_mean = finals.iter().sum::<f64>() / n_paths as f64;
    let var = finals
        .iter()
        .map(|v| (v - final_mean) * (v - final_mean))
        .sum::<f64>()
        / (n_paths as f64 - 1.0);
    Ok(MomentReport {
        master_seed,
        n_paths,
        quantity_name: quantity.name(),
        mean_series,
        slope,
        slope_se,
        final_mean,
        final_se: (var / n_paths as f64).sqrt(),
    })
}

#[derive(Debug, Clone)]
pub struct EqualValenceReport {
    pub charge_sq: ObservableSeries,
    pub deviation_sq: ObservableSeries,
    /// Whether `||rho||^2` never increased beyond round-off slack.
    pub charge_monotone: bool,
    /// Exponential rate of `||rho||^2` over the second half of the run;
    /// `None` when the charge is identically zero.
    pub charge_fit: Option<DecayFit>,
    /// Same for the concentration deviation.
    pub deviation_fit: Option<DecayFit>,
}

/// Deterministic decay check for equal-magnitude valences and equal
/// diffusivities with no forcing: records `||rho||^2` and the concentration
/// deviation, checks charge monotonicity, and fits both rates.
pub fn equal_valence_decay_check(
    initial: &SystemState,
    t_final: f64,
    dt: f64,
) -> Result<EqualValenceReport> {
    let z0 = initial.params[0].valence.abs();
    if !initial.params.iter().all(|p| p.valence.abs() == z0) {
        return Err(Error::Precondition(
            "valence magnitudes must all be equal".into(),
        ));
    }
    let d0 = initial.params[0].diffusivity;
    if !initial.params.iter().all(|p| p.diffusivity == d0) {
        return Err(Error::Precondition("diffusivities must all be equal".into()));
    }
    if norms::l2_norm_vec(&initial.f) != 0.0 || initial.noise.l2_norm_sq() != 0.0 {
        return Err(Error::Precondition(
            "decay check requires zero body force and zero noise".into(),
        ));
    }
    let n_steps = aligned_steps(t_final, dt)?;
    let mut s = initial.clone();
    let mut charge_sq = ObservableSeries::new("charge_sq", "decay");
    let mut deviation_sq = ObservableSeries::new("concentration_deviation_sq", "decay");
    charge_sq.push(0.0, ScalarObservable::ChargeSq.eval(&s)?)?;
    deviation_sq.push(0.0, ScalarObservable::ConcentrationDeviationSq.eval(&s)?)?;
    for _ in 0..n_steps {
        step::step(&mut s, dt)?;
        charge_sq.push(s.t, ScalarObservable::ChargeSq.eval(&s)?)?;
        deviation_sq.push(s.t, ScalarObservable::ConcentrationDeviationSq.eval(&s)?)?;
    }
    let slack = 1e-12 * charge_sq.samples()[0].1.max(1e-30);
    let charge_monotone = charge_sq
        .samples()
        .windows(2)
        .all(|w| w[1].1 <= w[0].1 + slack);
    let window = (t_final / 2.0, t_final);
    let charge_fit = observables::fit_decay_rate(&charge_sq, window).ok();
    let deviation_fit = observables::fit_decay_rate(&deviation_sq, window).ok();
    Ok(EqualValenceReport {
        charge_sq,
        deviation_sq,
        charge_monotone,
        charge_fit,
        deviation_fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{ScalarField, VectorField};
    use crate::grid::Grid;
    use crate::init::{make_initial_data, InitialKind};
    use crate::noise::NoiseSpec;
    use crate::species::SpeciesParams;
    use crate::state::StepOptions;

    #[test]
    fn time_average_matches_closed_forms() {
        let constant =
            ObservableSeries::from_samples("c", "r", (0..11).map(|i| (i as f64 * 0.1, 2.5)))
                .unwrap();
        assert!((time_average(&constant, 1.0).unwrap() - 2.5).abs() < 1e-14);

        let n = 20_000;
        let sine = ObservableSeries::from_samples(
            "s",
            "r",
            (0..=n).map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                (t, t.sin())
            }),
        )
        .unwrap();
        assert!(time_average(&sine, 2.0 * std::f64::consts::PI).unwrap().abs() < 1e-9);

        let decay = ObservableSeries::from_samples(
            "e",
            "r",
            (0..=3000).map(|i| {
                let t = i as f64 * 1e-3;
                (t, (-t).exp())
            }),
        )
        .unwrap();
        let expect = 0.316_737_643_877_378_69;
        assert!((time_average(&decay, 3.0).unwrap() - expect).abs() < 1e-6);

        // Series not covering the horizon is rejected.
        assert!(time_average(&constant, 2.0).is_err());
    }

    #[test]
    fn wasserstein_metric_basics() {
        assert_eq!(
            empirical_wasserstein_1d(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(),
            0.0
        );
        let a = [0.3, -1.2, 4.0, 2.2];
        let b: Vec<f64> = a.iter().map(|v| v + 0.75).collect();
        assert!((empirical_wasserstein_1d(&a, &b).unwrap() - 0.75).abs() < 1e-15);
        assert!((empirical_wasserstein_1d(&[0.0, 1.0], &[0.0, 2.0]).unwrap() - 0.5).abs() < 1e-15);
        // Symmetry and a triangle spot check.
        let c = [5.0, -2.0, 0.1, 0.4];
        let ab = empirical_wasserstein_1d(&a, &b).unwrap();
        let ba = empirical_wasserstein_1d(&b, &a).unwrap();
        assert_eq!(ab, ba);
        let ac = empirical_wasserstein_1d(&a, &c).unwrap();
        let cb = empirical_wasserstein_1d(&c, &b).unwrap();
        assert!(ab <= ac + cb + 1e-15);
        assert!(empirical_wasserstein_1d(&[], &[1.0]).is_err());
    }

    fn two_species_noisy_state(seed: u64, amplitude: f64) -> SystemState {
        let grid = Grid::torus(16, 16).unwrap();
        let params = vec![
            SpeciesParams::periodic(1.0, 1.0),
            SpeciesParams::periodic(1.0, -1.0),
        ];
        let noise = if amplitude > 0.0 {
            NoiseSpec::torus_low_modes(grid, &[amplitude; 4]).unwrap()
        } else {
            NoiseSpec::zero()
        };
        make_initial_data(
            &InitialKind::TwoSpecies { seed },
            grid,
            &params,
            0.0,
            VectorField::zeros(grid),
            noise,
            StepOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn kb_experiment_is_deterministic_and_trivial_without_noise() {
        let a = two_species_noisy_state(1, 0.2);
        let b = two_species_noisy_state(2, 0.2);
        let r1 = kb_convergence_experiment(&a, &b, &[0.1, 0.2], 0.01, 3, 77).unwrap();
        let r2 = kb_convergence_experiment(&a, &b, &[0.1, 0.2], 0.01, 3, 77).unwrap();
        for (x, y) in r1.mu_first.iter().zip(&r2.mu_first) {
            assert_eq!(x, y);
        }

        // Identical steady initial states without noise agree exactly.
        let grid = Grid::torus(16, 16).unwrap();
        let steady = SystemState::new(
            VectorField::zeros(grid),
            vec![
                ScalarField::constant(grid, 1.0),
                ScalarField::constant(grid, 1.0),
            ],
            vec![
                SpeciesParams::periodic(1.0, 1.0),
                SpeciesParams::periodic(1.0, -1.0),
            ],
            0.0,
            VectorField::zeros(grid),
            NoiseSpec::zero(),
            RngStream::new(0, 0),
            StepOptions::default(),
        )
        .unwrap();
        let r = kb_convergence_experiment(&steady, &steady, &[0.05, 0.1], 0.01, 2, 3).unwrap();
        for row in &r.discrepancy {
            for &v in row {
                assert_eq!(v, 0.0);
            }
        }

        // Misordered horizons are rejected.
        assert!(kb_convergence_experiment(&a, &b, &[0.2, 0.1], 0.01, 2, 0).is_err());
    }

    #[test]
    fn coupling_identical_pair_stays_at_zero_and_errors_are_contained() {
        let s = two_species_noisy_state(5, 0.1);
        let report =
            coupling_experiment(&s, &s, 8.0, 4, 1e6, 0.1, 0.01, 2, 1e-6, 11).unwrap();
        assert_eq!(report.fraction_contracted, 1.0);
        for o in &report.outcomes {
            assert_eq!(o.q_initial, 0.0);
            assert_eq!(o.q_final, Some(0.0));
            assert!(o.error.is_none());
        }
    }

    #[test]
    fn coupling_feedback_beats_free_pair() {
        let primary = two_species_noisy_state(6, 0.1);
        let mut companion = two_species_noisy_state(6, 0.1);
        companion.u = crate::spectral::leray_project(&VectorField::from_fns(
            companion.grid,
            |x, y| 0.3 * x.cos() * y.sin(),
            |x, y| -0.3 * x.sin() * y.cos(),
        ))
        .unwrap();

        let controlled =
            coupling_experiment(&primary, &companion, 32.0, 8, 1e6, 1.0, 0.01, 4, 1e-6, 21)
                .unwrap();
        let free =
            coupling_experiment(&primary, &companion, 0.0, 8, 1e6, 1.0, 0.01, 4, 1e-6, 21)
                .unwrap();
        assert_eq!(free.fraction_contracted, 0.0);
        for (c, f) in controlled.outcomes.iter().zip(&free.outcomes) {
            assert!(c.q_final.unwrap() < 0.1 * f.q_final.unwrap());
        }
    }

    #[test]
    fn moment_monitor_constant_on_steady_data_and_underpowered_guard() {
        let grid = Grid::torus(16, 16).unwrap();
        let steady = SystemState::new(
            VectorField::zeros(grid),
            vec![
                ScalarField::constant(grid, 1.0),
                ScalarField::constant(grid, 1.0),
            ],
            vec![
                SpeciesParams::periodic(1.0, 1.0),
                SpeciesParams::periodic(1.0, -1.0),
            ],
            0.0,
            VectorField::zeros(grid),
            NoiseSpec::zero(),
            RngStream::new(0, 0),
            StepOptions::default(),
        )
        .unwrap();
        for q in [
            MomentQuantity::EnergyLinear,
            MomentQuantity::EnergyQuartic,
            MomentQuantity::TorusQuadratic,
            MomentQuantity::LogH1,
        ] {
            let r = moment_monitor(&steady, q, 0.1, 0.01, 2, 2, 9).unwrap();
            assert!(r.slope.abs() < 1e-12, "{}: slope {}", r.quantity_name, r.slope);
        }

        let s = two_species_noisy_state(1, 0.1);
        assert!(exp_ergodicity_experiment(
            &s,
            ScalarObservable::KineticEnergy,
            &[0.1],
            0.01,
            20,
            0.2,
            0
        )
        .is_err());
    }

    #[test]
    fn moment_monitor_matches_discrete_noise_variance() {
        // Nonlinearities off: each forced mode is an exact discrete
        // Ornstein-Uhlenbeck recursion, so E||u(T)||^2 has a closed form.
        let grid = Grid::torus(16, 16).unwrap();
        let amplitudes = [0.4, 0.3];
        let noise = NoiseSpec::torus_low_modes(grid, &amplitudes).unwrap();
        let mut options = StepOptions::default();
        options.nonlinear_terms = false;
        let initial = SystemState::new(
            VectorField::zeros(grid),
            vec![
                ScalarField::constant(grid, 1.0),
                ScalarField::constant(grid, 1.0),
            ],
            vec![
                SpeciesParams::periodic(1.0, 1.0),
                SpeciesParams::periodic(1.0, -1.0),
            ],
            0.0,
            VectorField::zeros(grid),
            noise,
            RngStream::new(0, 0),
            StepOptions::default(),
        )
        .map(|mut s| {
            s.options = options;
            s
        })
        .unwrap();

        let (dt, n_steps, n_paths) = (0.01, 50, 400);
        let report = moment_monitor(
            &initial,
            MomentQuantity::EnergyLinear,
            dt * n_steps as f64,
            dt,
            n_steps,
            n_paths,
            1234,
        )
        .unwrap();

        // Both forced modes sit on |k|^2 = 1 shells.
        let mut expect = 0.0;
        for a in amplitudes {
            let q: f64 = 1.0 / (1.0 + dt);
            let var =
                a * a * dt * q.powi(2) * (1.0 - q.powi(2 * n_steps as i32)) / (1.0 - q * q);
            expect += var;
        }
        let err = (report.final_mean - expect).abs();
        assert!(
            err < 3.0 * report.final_se,
            "mean {:.6e}, expect {:.6e}, se {:.3e}",
            report.final_mean,
            expect,
            report.final_se
        );
    }

    #[test]
    fn equal_valence_square_charge_decay_has_heat_rate_floor() {
        let grid = Grid::square(24, 24).unwrap();
        let pi = std::f64::consts::PI;
        let mode = ScalarField::from_fn(grid, |x, y| (pi * x).sin() * (pi * y).sin());
        let mut c1 = ScalarField::constant(grid, 1.0);
        c1.add_scaled(0.05, &mode);
        let mut c2 = ScalarField::constant(grid, 1.0);
        c2.add_scaled(-0.05, &mode);
        let run = |d: f64| {
            let initial = SystemState::new(
                VectorField::zeros(grid),
                vec![c1.clone(), c2.clone()],
                vec![
                    SpeciesParams::dirichlet(d, 1.0, 1.0),
                    SpeciesParams::dirichlet(d, -1.0, 1.0),
                ],
                0.0,
                VectorField::zeros(grid),
                NoiseSpec::zero(),
                RngStream::new(0, 0),
                StepOptions::default(),
            )
            .unwrap();
            equal_valence_decay_check(&initial, 0.12, 2e-3).unwrap()
        };
        let base = run(1.0);
        assert!(base.charge_monotone);
        let rate = base.charge_fit.unwrap().rate;
        let h = grid.spacing();
        let lambda_h = (8.0 / (h * h)) * (pi * h / 2.0).sin().powi(2);
        assert!(
            rate >= 2.0 * lambda_h * 0.98,
            "rate {rate:.3} vs heat floor {:.3}",
            2.0 * lambda_h
        );
        let doubled = run(2.0);
        let ratio = doubled.charge_fit.unwrap().rate / rate;
        assert!((1.9..=2.1).contains(&ratio), "ratio {ratio:.3}");
    }

    #[test]
    fn zero_charge_stays_zero_in_decay_check() {
        let grid = Grid::torus(16, 16).unwrap();
        let c = ScalarField::from_fn(grid, |x, _| 1.0 + 0.1 * x.cos());
        let initial = SystemState::new(
            VectorField::zeros(grid),
            vec![c.clone(), c],
            vec![
                SpeciesParams::periodic(1.0, 1.0),
                SpeciesParams::periodic(1.0, -1.0),
            ],
            0.0,
            VectorField::zeros(grid),
            NoiseSpec::zero(),
            RngStream::new(0, 0),
            StepOptions::default(),
        )
        .unwrap();
        let report = equal_valence_decay_check(&initial, 0.1, 0.01).unwrap();
        assert!(report.charge_monotone);
        assert!(report.charge_sq.samples().iter().all(|&(_, v)| v < 1e-25));
        assert!(report.charge_fit.is_none());
        // The common perturbation obeys the heat equation; deviation decays.
        let dev = report.deviation_sq.samples();
        assert!(dev.last().unwrap().1 < dev[0].1);
    }
}
