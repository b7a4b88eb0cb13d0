//! Experiment orchestration: builds states from a resolved config, runs the
//! named experiment, and writes all artifacts (CSV series, JSON reports,
//! checkpoints, plot scripts) into the output directory. Numerical outputs
//! contain no timestamps; wall-clock lines go only to `run.log`.

use crate::config::{
    config_hash, DomainKind, Experiment, ForceSpec, InitKind, NoiseKind, RunConfig,
};
use crate::plots;
use npns_core::checkpoint;
use npns_core::ergodic::{self, MomentQuantity, ScalarObservable};
use npns_core::field::{ScalarField, VectorField};
use npns_core::grid::Grid;
use npns_core::init::{make_initial_data, InitialKind};
use npns_core::noise::NoiseSpec;
use npns_core::norms;
use npns_core::observables;
use npns_core::picard;
use npns_core::poisson;
use npns_core::rngstream::RngStream;
use npns_core::series::ObservableSeries;
use npns_core::spectral;
use npns_core::state::{StepOptions, SystemState};
use npns_core::step;
use serde_json::json;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// Failures split by exit code: config errors exit 2, numerical errors 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<crate::config::ConfigError> for CliError {
    fn from(e: crate::config::ConfigError) -> CliError {
        CliError::Config(e.to_string())
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn numerical_err(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

pub struct Runner {
    config: RunConfig,
    hash: String,
    out: PathBuf,
}

impl Runner {
    pub fn new(config: RunConfig) -> Result<Runner, CliError> {
        let out = config.out.clone();
        fs::create_dir_all(&out).map_err(config_err)?;
        let hash = config_hash(&config);
        Ok(Runner { config, hash, out })
    }

    /// Appends a wall-clock line to `run.log`; the only timestamped artifact.
    fn log(&self, message: &str) {
        let stamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        if let Ok(mut f) = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.out.join("run.log"))
        {
            let _ = writeln!(f, "[{stamp}] {message}");
        }
    }

    fn write_json(&self, name: &str, value: &serde_json::Value) -> Result<(), CliError> {
        let mut w = BufWriter::new(File::create(self.out.join(name)).map_err(numerical_err)?);
        serde_json::to_writer_pretty(&mut w, value).map_err(numerical_err)?;
        w.flush().map_err(numerical_err)
    }

    fn write_series(&self, name: &str, series: &ObservableSeries) -> Result<(), CliError> {
        let mut w = BufWriter::new(File::create(self.out.join(name)).map_err(numerical_err)?);
        series.write_csv(&mut w).map_err(numerical_err)?;
        w.flush().map_err(numerical_err)
    }

    fn grid(&self) -> Result<Grid, CliError> {
        match self.config.domain {
            DomainKind::Torus => Grid::torus(self.config.nx, self.config.ny),
            DomainKind::Square => Grid::square(self.config.nx, self.config.ny),
        }
        .map_err(config_err)
    }

    fn step_options(&self) -> StepOptions {
        StepOptions {
            nonlinear_terms: self.config.nonlinear_terms,
            clamp_negative: self.config.clamp_negative,
            galerkin_modes: self.config.galerkin_modes,
            cache_dir: match self.config.domain {
                DomainKind::Square => Some(self.out.join("cache")),
                DomainKind::Torus => None,
            },
        }
    }

    fn noise_spec(&self, grid: Grid, options: &StepOptions) -> Result<NoiseSpec, CliError> {
        match &self.config.noise {
            NoiseKind::Zero => Ok(NoiseSpec::zero()),
            NoiseKind::TorusLow { amplitudes } => {
                NoiseSpec::torus_low_modes(grid, amplitudes).map_err(config_err)
            }
            NoiseKind::SquareStokes { amplitudes } => {
                NoiseSpec::square_stokes(grid, amplitudes, options.cache_dir.as_deref())
                    .map_err(config_err)
            }
        }
    }

    fn force_field(&self, grid: Grid) -> VectorField {
        // Analytic presets are written for both domains: torus coordinates
        // span [0, 2pi), the square spans [0, 1], so square variants rescale
        // wave arguments by 2pi and recenter the bump.
        let scale = match self.config.domain {
            DomainKind::Torus => 1.0,
            DomainKind::Square => 2.0 * std::f64::consts::PI,
        };
        let center = match self.config.domain {
            DomainKind::Torus => std::f64::consts::PI,
            DomainKind::Square => 0.5,
        };
        match &self.config.force {
            ForceSpec::Zero => VectorField::zeros(grid),
            ForceSpec::TaylorGreen { amplitude } => {
                let a = *amplitude;
                VectorField::from_fns(
                    grid,
                    move |x, y| a * (scale * x).sin() * (scale * y).cos(),
                    move |x, y| -a * (scale * x).cos() * (scale * y).sin(),
                )
            }
            ForceSpec::SingleMode { kx, ky, amplitude } => {
                let (kx, ky) = (*kx as f64, *ky as f64);
                let norm = kx.hypot(ky);
                let (ex, ey) = (ky / norm, -kx / norm);
                let a = *amplitude;
                VectorField::from_fns(
                    grid,
                    move |x, y| a * ex * (scale * (kx * x + ky * y)).cos(),
                    move |x, y| a * ey * (scale * (kx * x + ky * y)).cos(),
                )
            }
            ForceSpec::Bump { amplitude, width } => {
                let (a, w) = (*amplitude, *width);
                let psi = move |x: f64, y: f64| {
                    let (dx, dy) = (x - center, y - center);
                    a * (-(dx * dx + dy * dy) / (2.0 * w * w)).exp()
                };
                VectorField::from_fns(
                    grid,
                    move |x, y| (y - center) / (w * w) * psi(x, y),
                    move |x, y| -(x - center) / (w * w) * psi(x, y),
                )
            }
        }
    }

    fn initial_kind(&self, seed: u64) -> InitialKind {
        match &self.config.init {
            InitKind::Neutral => InitialKind::Neutral { seed },
            InitKind::SteadyPlusPerturbation { epsilon } => InitialKind::SteadyPlusPerturbation {
                epsilon: *epsilon,
                seed,
            },
            InitKind::TwoSpecies => InitialKind::TwoSpecies { seed },
        }
    }

    /// Builds the configured initial state; failures here are config-class.
    fn initial_state(&self, seed: u64) -> Result<SystemState, CliError> {
        let grid = self.grid()?;
        let options = self.step_options();
        let noise = self.noise_spec(grid, &options)?;
        let force = self.force_field(grid);
        let mut state = make_initial_data(
            &self.initial_kind(seed),
            grid,
            &self.config.species,
            self.config.phi_gamma,
            force,
            noise,
            options,
        )
        .map_err(config_err)?;
        state.rng = RngStream::new(self.config.seed, 0);
        Ok(state)
    }

    fn n_steps(&self, horizon: f64) -> Result<usize, CliError> {
        if horizon == 0.0 {
            return Ok(0);
        }
        let n = (horizon / self.config.dt).round();
        if n < 1.0 || (n * self.config.dt - horizon).abs() > 1e-9 * horizon.max(1.0) {
            return Err(CliError::Config(format!(
                "horizon {horizon} is not a multiple of dt = {}",
                self.config.dt
            )));
        }
        Ok(n as usize)
    }

    pub fn execute(&self) -> Result<(), CliError> {
        self.write_json(
            "config_resolved.json",
            &json!({
                "config_hash": self.hash,
                "config": &self.config,
            }),
        )?;
        self.log(&format!(
            "start experiment {:?}, hash {}",
            self.config.experiment, self.hash
        ));
        let run = match self.config.experiment {
            Experiment::Simulate => self.run_simulate(),
            Experiment::Decay => self.run_decay(),
            Experiment::Picard => self.run_picard(),
            Experiment::Identities => self.run_identities(),
            Experiment::Elliptic => self.run_elliptic(),
            Experiment::Kb => self.run_kb(),
            Experiment::Couple => self.run_couple(),
            Experiment::Expergo => self.run_expergo(),
            Experiment::Moments => self.run_moments(),
        };
        match &run {
            Ok(()) => self.log("done"),
            Err(e) => self.log(&format!("failed: {e}")),
        }
        run?;
        plots::plot_emit(&self.out).map_err(numerical_err)?;
        Ok(())
    }

    fn diagnostics_row(state: &SystemState) -> Result<[f64; 4], CliError> {
        Ok([
            observables::kinetic_energy(state),
            ScalarObservable::ChargeSq.eval(state).map_err(numerical_err)?,
            ScalarObservable::ConcentrationDeviationSq
                .eval(state)
                .map_err(numerical_err)?,
            observables::entropy(state).map_err(numerical_err)?.value,
        ])
    }

    /// Time stepping with diagnostics and checkpoint cadence; shared by the
    /// simulate experiment and resume.
    fn simulate_loop(
        &self,
        state: &mut SystemState,
        n_steps: usize,
        csv_prefix: &str,
    ) -> Result<(), CliError> {
        let names = [
            "kinetic_energy",
            "charge_sq",
            "concentration_deviation_sq",
            "entropy",
        ];
        let run_id = format!("seed{}", self.config.seed);
        let mut series: Vec<ObservableSeries> = names
            .iter()
            .map(|n| ObservableSeries::new(*n, run_id.clone()))
            .collect();
        let row = Self::diagnostics_row(state)?;
        for (s, v) in series.iter_mut().zip(row) {
            s.push(state.t, v).map_err(numerical_err)?;
        }
        let every = self.config.params.sample_every.max(1);
        let chk_every = self.config.params.checkpoint_every;
        for k in 1..=n_steps {
            step::step(state, self.config.dt).map_err(numerical_err)?;
            if k % every == 0 || k == n_steps {
                let row = Self::diagnostics_row(state)?;
                for (s, v) in series.iter_mut().zip(row) {
                    s.push(state.t, v).map_err(numerical_err)?;
                }
            }
            if chk_every > 0 && k % chk_every == 0 && k != n_steps {
                checkpoint::write_checkpoint(state, &self.out.join(format!("chk_{:08}", state.step_index)))
                    .map_err(numerical_err)?;
            }
        }
        for (name, s) in names.iter().zip(&series) {
            self.write_series(&format!("{csv_prefix}{name}.csv"), s)?;
        }
        checkpoint::write_checkpoint(state, &self.out.join("chk_final")).map_err(numerical_err)?;
        Ok(())
    }

    fn run_simulate(&self) -> Result<(), CliError> {
        let mut state = self.initial_state(self.config.init_seed)?;
        let n_steps = self.n_steps(self.config.t_final)?;
        self.simulate_loop(&mut state, n_steps, "")?;
        self.write_json(
            "report.json",
            &json!({
                "experiment": "simulate",
                "config_hash": self.hash,
                "seed": self.config.seed,
                "steps": n_steps,
                "t_final": state.t,
                "final": {
                    "kinetic_energy": observables::kinetic_energy(&state),
                    "potential_energy": observables::potential_energy(&state).map_err(numerical_err)?,
                },
                "monitor": &state.monitor,
            }),
        )
    }

    /// Continues a checkpointed run; `config` must be the resolved one saved
    /// beside the checkpoint so cadence and dt match the original run.
    pub fn resume(&self, stem: &Path, until: Option<f64>) -> Result<(), CliError> {
        let mut state = checkpoint::read_checkpoint(stem).map_err(config_err)?;
        let target = until.unwrap_or(self.config.t_final);
        let remaining = target - state.t;
        let n_steps = if remaining <= 1e-12 {
            0
        } else {
            let n = (remaining / self.config.dt).round();
            if (n * self.config.dt - remaining).abs() > 1e-6 {
                return Err(CliError::Config(format!(
                    "remaining horizon {remaining} is not a multiple of dt = {}",
                    self.config.dt
                )));
            }
            n as usize
        };
        self.log(&format!(
            "resume from t = {}, {} further steps",
            state.t, n_steps
        ));
        self.simulate_loop(&mut state, n_steps, "resumed_")?;
        self.write_json(
            "resume_report.json",
            &json!({
                "experiment": "resume",
                "config_hash": self.hash,
                "t_final": state.t,
                "steps": n_steps,
            }),
        )
    }

    fn run_decay(&self) -> Result<(), CliError> {
        let initial = self.initial_state(self.config.init_seed)?;
        let report = ergodic::equal_valence_decay_check(&initial, self.config.t_final, self.config.dt)
            .map_err(numerical_err)?;
        self.write_series("charge_sq.csv", &report.charge_sq)?;
        self.write_series("deviation_sq.csv", &report.deviation_sq)?;

        // Snapshot pass for the even-power deviation norms on the same
        // deterministic trajectory.
        let n_steps = self.n_steps(self.config.t_final)?;
        let every = self.config.params.sample_every.max(1);
        let mut state = initial.clone();
        let mut snapshots = vec![state.clone()];
        for k in 1..=n_steps {
            step::step(&mut state, self.config.dt).map_err(numerical_err)?;
            if k % every == 0 || k == n_steps {
                snapshots.push(state.clone());
            }
        }
        let targets: Vec<f64> = initial.c.iter().map(|c| c.mean()).collect();
        let l4 = observables::lp_decay_series(&snapshots, 4, &targets, "decay")
            .map_err(numerical_err)?;
        self.write_series("l4_deviation.csv", &l4)?;

        let fit_json = |fit: &Option<observables::DecayFit>| match fit {
            Some(f) => json!({"rate": f.rate, "r_squared": f.r_squared}),
            None => json!(null),
        };
        self.write_json(
            "report.json",
            &json!({
                "experiment": "decay",
                "config_hash": self.hash,
                "charge_monotone": report.charge_monotone,
                "charge_fit": fit_json(&report.charge_fit),
                "deviation_fit": fit_json(&report.deviation_fit),
            }),
        )
    }

    fn run_picard(&self) -> Result<(), CliError> {
        let initial = self.initial_state(self.config.init_seed)?;
        let report = picard::picard_solve(
            &initial,
            self.config.t_final,
            self.config.dt,
            self.config.params.picard_sweeps,
            self.config.params.picard_tol,
        )
        .map_err(numerical_err)?;

        // The fixed point must agree with the plain integrator driven by the
        // same increments; measure the end-state gap.
        let mut direct = initial.clone();
        let n_steps = self.n_steps(self.config.t_final)?;
        for _ in 0..n_steps {
            step::step(&mut direct, self.config.dt).map_err(numerical_err)?;
        }
        let mut gap_sq = norms::l2_norm_vec(&report.final_state.u.sub(&direct.u)).powi(2);
        for (a, b) in report.final_state.c.iter().zip(&direct.c) {
            gap_sq += norms::l2_norm(&a.sub(b)).powi(2);
        }

        let mut distances = ObservableSeries::new("sweep_distance", format!("seed{}", self.config.seed));
        for (i, d) in report.distances.iter().enumerate() {
            distances.push((i + 1) as f64, *d).map_err(numerical_err)?;
        }
        self.write_series("sweep_distance.csv", &distances)?;
        self.write_json(
            "report.json",
            &json!({
                "experiment": "picard",
                "config_hash": self.hash,
                "converged": report.converged,
                "sweeps": report.sweeps,
                "last_distance": report.distances.last(),
                "direct_gap": gap_sq.sqrt(),
            }),
        )
    }

    fn run_identities(&self) -> Result<(), CliError> {
        if self.config.domain != DomainKind::Torus {
            return Err(CliError::Config(
                "the identities experiment uses periodic random fields; set domain = torus".into(),
            ));
        }
        let grid = self.grid()?;
        let n = self.config.params.identities_samples;
        let run_id = format!("seed{}", self.config.seed);
        let mut velocity = ObservableSeries::new("cancellation_residual", run_id.clone());
        let mut species = ObservableSeries::new("two_species_residual", run_id);
        for s in 0..n {
            let mut stream = RngStream::new(self.config.seed, s as u64);
            let rho = random_band_limited(grid, &mut stream, 4);
            let mut sigma = random_band_limited(grid, &mut stream, 4);
            sigma.shift(2.0);
            let raw = VectorField {
                x: random_band_limited(grid, &mut stream, 4),
                y: random_band_limited(grid, &mut stream, 4),
            };
            let u = spectral::leray_project(&raw).map_err(numerical_err)?;
            let phi = poisson::solve_potential(&rho, 0.0).map_err(numerical_err)?;
            let r1 = observables::cancellation_residual_velocity(&u, &rho, &phi)
                .map_err(numerical_err)?;
            let r2 = observables::two_species_identity_residual(&rho, &sigma, &phi)
                .map_err(numerical_err)?;
            velocity.push(s as f64, r1.residual).map_err(numerical_err)?;
            species.push(s as f64, r2).map_err(numerical_err)?;
        }
        let max_of = |s: &ObservableSeries| {
            s.samples().iter().map(|&(_, v)| v).fold(0.0, f64::max)
        };
        self.write_series("cancellation_residual.csv", &velocity)?;
        self.write_series("two_species_residual.csv", &species)?;
        self.write_json(
            "report.json",
            &json!({
                "experiment": "identities",
                "config_hash": self.hash,
                "samples": n,
                "max_cancellation_residual": max_of(&velocity),
                "max_two_species_residual": max_of(&species),
            }),
        )
    }

    fn run_elliptic(&self) -> Result<(), CliError> {
        if self.config.domain != DomainKind::Torus {
            return Err(CliError::Config(
                "the elliptic experiment uses periodic random fields; set domain = torus".into(),
            ));
        }
        let resolutions = &self.config.params.elliptic_resolutions;
        let samples = self.config.params.elliptic_samples;
        let mut max_ratios = ObservableSeries::new("max_gradient_ratio", format!("seed{}", self.config.seed));
        let mut single_mode = Vec::new();
        for &n in resolutions {
            let grid = Grid::torus(n, n).map_err(config_err)?;
            let mut worst = 0.0f64;
            for s in 0..samples {
                // The same stream at every resolution synthesizes the same
                // band-limited continuum field, so ratios are comparable.
                let mut stream = RngStream::new(self.config.seed, s as u64);
                let rho = random_band_limited(grid, &mut stream, 4);
                worst = worst.max(gradient_ratio(&rho)?);
            }
            max_ratios.push(n as f64, worst).map_err(numerical_err)?;
            let mode = ScalarField::from_fn(grid, |x, _| x.cos());
            single_mode.push(json!({"n": n, "ratio": gradient_ratio(&mode)?}));
        }
        let values: Vec<f64> = max_ratios.samples().iter().map(|&(_, v)| v).collect();
        let spread = values.iter().fold(0.0f64, |a, &b| a.max(b))
            / values.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        self.write_series("max_gradient_ratio.csv", &max_ratios)?;
        self.write_json(
            "report.json",
            &json!({
                "experiment": "elliptic",
                "config_hash": self.hash,
                "samples": samples,
                "max_ratios": values,
                "spread": spread,
                "single_mode": single_mode,
            }),
        )
    }

    fn run_kb(&self) -> Result<(), CliError> {
        let first = self.initial_state(self.config.init_seed)?;
        let second_seed = self
            .config
            .params
            .kb_second_seed
            .unwrap_or(self.config.init_seed + 1);
        let second = self.initial_state(second_seed)?;
        let report = ergodic::kb_convergence_experiment(
            &first,
            &second,
            &self.config.params.kb_t_list,
            self.config.dt,
            self.config.params.kb_paths,
            self.config.seed,
        )
        .map_err(numerical_err)?;
        for (k, name) in report.observable_names.iter().enumerate() {
            let mut s = ObservableSeries::new(
                format!("kb_discrepancy_{name}"),
                format!("seed{}", self.config.seed),
            );
            for (ti, t) in report.t_list.iter().enumerate() {
                s.push(*t, report.discrepancy[ti][k]).map_err(numerical_err)?;
            }
            self.write_series(&format!("kb_discrepancy_{name}.csv"), &s)?;
        }
        self.write_json(
            "report.json",
            &json!({
                "experiment": "kb",
                "config_hash": self.hash,
                "master_seed": report.master_seed,
                "n_paths": report.n_paths,
                "t_list": report.t_list,
                "observables": report.observable_names,
                "mu_first": report.mu_first,
                "mu_second": report.mu_second,
                "discrepancy": report.discrepancy,
                "reference": report.reference,
            }),
        )
    }

    fn run_couple(&self) -> Result<(), CliError> {
        let primary = self.initial_state(self.config.init_seed)?;
        let companion_seed = self
            .config
            .params
            .couple_companion_seed
            .unwrap_or(self.config.init_seed + 1000);
        let companion = self.initial_state(companion_seed)?;
        let p = &self.config.params;
        let report = ergodic::coupling_experiment(
            &primary,
            &companion,
            p.couple_lambda,
            p.couple_modes,
            p.couple_budget,
            self.config.t_final,
            self.config.dt,
            p.couple_paths,
            p.couple_threshold,
            self.config.seed,
        )
        .map_err(numerical_err)?;
        self.write_series("pair_energy.csv", &report.q_series_path0)?;
        let outcomes: Vec<_> = report
            .outcomes
            .iter()
            .map(|o| {
                json!({
                    "q_initial": o.q_initial,
                    "q_final": o.q_final,
                    "contracted": o.contracted,
                    "fired": o.fired,
                    "error": o.error,
                })
            })
            .collect();
        self.write_json(
            "report.json",
            &json!({
                "experiment": "couple",
                "config_hash": self.hash,
                "master_seed": report.master_seed,
                "lambda": report.lambda,
                "n_modes": report.n_modes,
                "budget": report.budget,
                "threshold": report.threshold,
                "fraction_contracted": report.fraction_contracted,
                "fraction_fired": report.fraction_fired,
                "outcomes": outcomes,
            }),
        )
    }

    fn run_expergo(&self) -> Result<(), CliError> {
        let initial = self.initial_state(self.config.init_seed)?;
        let p = &self.config.params;
        let observable = parse_observable(&p.expergo_observable)?;
        let reference_t = p
            .expergo_reference_t
            .unwrap_or_else(|| 2.0 * p.expergo_t_grid.last().copied().unwrap_or(1.0));
        let report = ergodic::exp_ergodicity_experiment(
            &initial,
            observable,
            &p.expergo_t_grid,
            self.config.dt,
            p.expergo_paths,
            reference_t,
            self.config.seed,
        )
        .map_err(numerical_err)?;
        self.write_series("w1_distance.csv", &report.w_series)?;
        self.write_json(
            "report.json",
            &json!({
                "experiment": "expergo",
                "config_hash": self.hash,
                "master_seed": report.master_seed,
                "n_paths": report.n_paths,
                "noise_floor": report.noise_floor,
                "fit": report.fit.as_ref().map(|f| json!({
                    "rate": f.rate,
                    "r_squared": f.r_squared,
                })),
            }),
        )
    }

    fn run_moments(&self) -> Result<(), CliError> {
        let initial = self.initial_state(self.config.init_seed)?;
        let p = &self.config.params;
        let quantity = parse_quantity(&p.moments_quantity, p.moments_eta)?;
        let report = ergodic::moment_monitor(
            &initial,
            quantity,
            self.config.t_final,
            self.config.dt,
            p.moments_sample_every,
            p.moments_paths,
            self.config.seed,
        )
        .map_err(numerical_err)?;
        self.write_series("moment_mean.csv", &report.mean_series)?;
        self.write_json(
            "report.json",
            &json!({
                "experiment": "moments",
                "config_hash": self.hash,
                "master_seed": report.master_seed,
                "n_paths": report.n_paths,
                "quantity": report.quantity_name,
                "slope": report.slope,
                "slope_se": report.slope_se,
                "final_mean": report.final_mean,
                "final_se": report.final_se,
            }),
        )
    }
}

fn parse_observable(name: &str) -> Result<ScalarObservable, CliError> {
    match name {
        "kinetic_energy" => Ok(ScalarObservable::KineticEnergy),
        "charge_sq" => Ok(ScalarObservable::ChargeSq),
        "concentration_deviation_sq" => Ok(ScalarObservable::ConcentrationDeviationSq),
        "entropy" => Ok(ScalarObservable::Entropy),
        other => Err(CliError::Config(format!(
            "unknown observable `{other}`; expected kinetic_energy, charge_sq, \
             concentration_deviation_sq, or entropy"
        ))),
    }
}

fn parse_quantity(name: &str, eta: f64) -> Result<MomentQuantity, CliError> {
    match name {
        "energy_linear" => Ok(MomentQuantity::EnergyLinear),
        "energy_quartic" => Ok(MomentQuantity::EnergyQuartic),
        "charge_exp" => Ok(MomentQuantity::ChargeExp { eta }),
        "torus_quadratic" => Ok(MomentQuantity::TorusQuadratic),
        "log_h1" => Ok(MomentQuantity::LogH1),
        other => Err(CliError::Config(format!(
            "unknown moment quantity `{other}`; expected energy_linear, energy_quartic, \
             charge_exp, torus_quadratic, or log_h1"
        ))),
    }
}

/// Zero-mean random field supported on modes with `|kx|, |ky| <= band`,
/// spectral falloff `1/(1 + |k|^2)`, deterministic in the stream.
fn random_band_limited(grid: Grid, stream: &mut RngStream, band: i64) -> ScalarField {
    let mut field = ScalarField::zeros(grid);
    for kx in -band..=band {
        for ky in 0..=band {
            // One representative per conjugate pair: upper half-plane plus
            // the positive kx axis.
            if ky == 0 && kx <= 0 {
                continue;
            }
            let k_sq = (kx * kx + ky * ky) as f64;
            let amp = stream.normal() / (1.0 + k_sq);
            let phase = stream.normal().atan2(stream.normal());
            let (fx, fy) = (kx as f64, ky as f64);
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    let x = grid.node_x(i);
                    let y = grid.node_y(j);
                    field.values[grid.idx(i, j)] += amp * (fx * x + fy * y + phase).cos();
                }
            }
        }
    }
    field
}

/// `||grad Phi||_{L^4} / ||rho||_{L^{4/3}}` with `Phi` solved from `rho`.
fn gradient_ratio(rho: &ScalarField) -> Result<f64, CliError> {
    let phi = poisson::solve_potential(rho, 0.0).map_err(numerical_err)?;
    let grad = poisson::grad_potential(&phi).map_err(numerical_err)?;
    let num = norms::lp_norm_vec(&grad, 4.0).map_err(numerical_err)?;
    let den = norms::lp_norm(rho, 4.0 / 3.0).map_err(numerical_err)?;
    if den == 0.0 {
        return Err(CliError::Numerical("zero charge density sample".into()));
    }
    Ok(num / den)
}
