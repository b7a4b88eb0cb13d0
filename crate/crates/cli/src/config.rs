//! Line-oriented run configuration: `section.key = value` pairs, full-line
//! `#` comments, comma-separated lists, and named analytic force presets.
//! Unknown keys, duplicates, and cross-field inconsistencies are rejected
//! with line numbers before any compute starts.

use npns_core::species::{BoundaryKind, SpeciesParams};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::PathBuf;

/// Error carrying the offending line where one exists.
#[derive(Debug)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(n) => write!(f, "line {n}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(line: Option<usize>, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError {
        line,
        message: message.into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Torus,
    Square,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForceSpec {
    Zero,
    /// `amplitude * (sin x cos y, -cos x sin y)`.
    TaylorGreen { amplitude: f64 },
    /// One divergence-free Fourier mode with wave vector `(kx, ky)`.
    SingleMode { kx: i64, ky: i64, amplitude: f64 },
    /// Divergence-free vortex from a Gaussian stream function at the domain
    /// center with the given width.
    Bump { amplitude: f64, width: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Zero,
    TorusLow { amplitudes: Vec<f64> },
    SquareStokes { amplitudes: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Simulate,
    Decay,
    Picard,
    Identities,
    Elliptic,
    Kb,
    Couple,
    Expergo,
    Moments,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Neutral,
    SteadyPlusPerturbation { epsilon: f64 },
    TwoSpecies,
}

/// Parameters for the statistical experiments, resolved with defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentParams {
    pub sample_every: usize,
    pub checkpoint_every: usize,
    pub picard_sweeps: usize,
    pub picard_tol: f64,
    pub identities_samples: usize,
    pub elliptic_samples: usize,
    pub elliptic_resolutions: Vec<usize>,
    pub kb_t_list: Vec<f64>,
    pub kb_paths: usize,
    pub kb_second_seed: Option<u64>,
    pub couple_lambda: f64,
    pub couple_modes: usize,
    pub couple_budget: f64,
    pub couple_paths: usize,
    pub couple_threshold: f64,
    pub couple_companion_seed: Option<u64>,
    pub expergo_observable: String,
    pub expergo_t_grid: Vec<f64>,
    pub expergo_paths: usize,
    pub expergo_reference_t: Option<f64>,
    pub moments_quantity: String,
    pub moments_eta: f64,
    pub moments_paths: usize,
    pub moments_sample_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub domain: DomainKind,
    pub nx: usize,
    pub ny: usize,
    pub species: Vec<SpeciesParams>,
    pub noise: NoiseKind,
    pub force: ForceSpec,
    pub dt: f64,
    pub t_final: f64,
    pub seed: u64,
    pub threads: Option<usize>,
    pub experiment: Experiment,
    pub init: InitKind,
    pub init_seed: u64,
    pub phi_gamma: f64,
    pub nonlinear_terms: bool,
    pub clamp_negative: bool,
    pub galerkin_modes: usize,
    pub out: PathBuf,
    pub params: ExperimentParams,
}

/// Key/value store with line provenance and consumption tracking, so unused
/// keys can be reported as unknown.
struct Reader {
    entries: BTreeMap<String, (usize, String)>,
    consumed: BTreeSet<String>,
}

impl Reader {
    fn parse(text: &str) -> Result<Reader, ConfigError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return err(Some(line_no), format!("expected `key = value`, got `{line}`"));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty()
                || !key
                    .chars()
                    .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '.' || c == '_')
            {
                return err(Some(line_no), format!("malformed key `{key}`"));
            }
            if let Some((prev_line, _)) = entries.get(&key) {
                return err(
                    Some(line_no),
                    format!("duplicate key `{key}`, first set on line {prev_line}"),
                );
            }
            entries.insert(key, (line_no, value));
        }
        Ok(Reader {
            entries,
            consumed: BTreeSet::new(),
        })
    }

    fn raw(&mut self, key: &str) -> Option<(usize, String)> {
        self.consumed.insert(key.to_string());
        self.entries.get(key).cloned()
    }

    fn str_opt(&mut self, key: &str) -> Option<(usize, String)> {
        self.raw(key)
    }

    fn f64_opt(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(Some(x)),
                _ => err(Some(line), format!("`{key}` must be a finite number, got `{v}`")),
            },
        }
    }

    fn f64_or(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    fn f64_req(&mut self, key: &str) -> Result<f64, ConfigError> {
        self.f64_opt(key)?
            .ok_or_else(|| ConfigError {
                line: None,
                message: format!("missing required key `{key}`"),
            })
    }

    fn usize_opt(&mut self, key: &str) -> Result<Option<usize>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<usize>()
                .map(Some)
                .map_err(|_| ConfigError {
                    line: Some(line),
                    message: format!("`{key}` must be a nonnegative integer, got `{v}`"),
                }),
        }
    }

    fn usize_or(&mut self, key: &str, default: usize) -> Result<usize, ConfigError> {
        Ok(self.usize_opt(key)?.unwrap_or(default))
    }

    fn u64_opt(&mut self, key: &str) -> Result<Option<u64>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<u64>().map(Some).map_err(|_| ConfigError {
                line: Some(line),
                message: format!("`{key}` must be a nonnegative integer, got `{v}`"),
            }),
        }
    }

    fn bool_or(&mut self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some((line, v)) => match v.as_str() {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => err(Some(line), format!("`{key}` must be true or false, got `{v}`")),
            },
        }
    }

    fn f64_list_opt(&mut self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => {
                let mut out = Vec::new();
                for part in v.split(',') {
                    match part.trim().parse::<f64>() {
                        Ok(x) if x.is_finite() => out.push(x),
                        _ => {
                            return err(
                                Some(line),
                                format!("`{key}` must be a comma-separated number list, got `{v}`"),
                            )
                        }
                    }
                }
                Ok(Some(out))
            }
        }
    }

    fn usize_list_or(
        &mut self,
        key: &str,
        default: &[usize],
    ) -> Result<Vec<usize>, ConfigError> {
        match self.raw(key) {
            None => Ok(default.to_vec()),
            Some((line, v)) => {
                let mut out = Vec::new();
                for part in v.split(',') {
                    match part.trim().parse::<usize>() {
                        Ok(x) => out.push(x),
                        _ => {
                            return err(
                                Some(line),
                                format!("`{key}` must be a comma-separated integer list, got `{v}`"),
                            )
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    /// Every entry must have been consumed by a recognized key path.
    fn finish(&self) -> Result<(), ConfigError> {
        for (key, (line, _)) in &self.entries {
            if !self.consumed.contains(key) {
                return err(Some(*line), format!("unknown key `{key}`"));
            }
        }
        Ok(())
    }
}

fn parse_force(reader: &mut Reader) -> Result<ForceSpec, ConfigError> {
    let preset = reader.str_opt("force.preset");
    let amplitude = reader.f64_or("force.amplitude", 1.0)?;
    let width = reader.f64_or("force.width", 0.5)?;
    let Some((line, preset)) = preset else {
        return Ok(ForceSpec::Zero);
    };
    match preset.as_str() {
        "zero" => Ok(ForceSpec::Zero),
        "taylor_green" => Ok(ForceSpec::TaylorGreen { amplitude }),
        "bump" => {
            if !(width > 0.0) {
                return err(Some(line), "bump force needs force.width > 0");
            }
            Ok(ForceSpec::Bump { amplitude, width })
        }
        other => {
            let inner = other
                .strip_prefix("single_mode(")
                .and_then(|s| s.strip_suffix(')'));
            let Some(inner) = inner else {
                return err(
                    Some(line),
                    format!(
                        "unknown force preset `{other}`; expected zero, taylor_green, \
                         single_mode(kx,ky), or bump"
                    ),
                );
            };
            let parts: Vec<_> = inner.split(',').map(str::trim).collect();
            let wave = (parts.len() == 2)
                .then(|| {
                    Some((
                        parts[0].parse::<i64>().ok()?,
                        parts[1].parse::<i64>().ok()?,
                    ))
                })
                .flatten();
            let Some((kx, ky)) = wave else {
                return err(
                    Some(line),
                    format!("single_mode expects two integers, got `{inner}`"),
                );
            };
            if kx == 0 && ky == 0 {
                return err(Some(line), "single_mode wave vector must be nonzero");
            }
            Ok(ForceSpec::SingleMode { kx, ky, amplitude })
        }
    }
}

fn parse_species(reader: &mut Reader, domain: DomainKind) -> Result<Vec<SpeciesParams>, ConfigError> {
    let mut indices = BTreeSet::new();
    for key in reader.entries.keys() {
        if let Some(rest) = key.strip_prefix("species.") {
            if let Some((idx, _)) = rest.split_once('.') {
                if let Ok(i) = idx.parse::<usize>() {
                    indices.insert(i);
                }
            }
        }
    }
    if indices.is_empty() {
        return err(None, "no species defined; add species.1.z and species.1.d");
    }
    let n = *indices.iter().max().unwrap();
    if indices.len() != n || !indices.contains(&1) {
        let mut got = String::new();
        for i in &indices {
            let _ = write!(got, "{i} ");
        }
        return err(
            None,
            format!("species indices must be 1..={n} with no gaps, got {}", got.trim_end()),
        );
    }

    let mut out = Vec::with_capacity(n);
    for i in 1..=n {
        let z = reader.f64_req(&format!("species.{i}.z"))?;
        let d = reader.f64_req(&format!("species.{i}.d"))?;
        let bc = reader.str_opt(&format!("species.{i}.bc"));
        let gamma = reader.f64_opt(&format!("species.{i}.gamma"))?;
        let default_bc = match domain {
            DomainKind::Torus => "periodic",
            DomainKind::Square => "dirichlet",
        };
        let (bc_line, bc_name) = match &bc {
            Some((line, name)) => (Some(*line), name.as_str()),
            None => (None, default_bc),
        };
        let params = match bc_name {
            "periodic" => {
                if gamma.is_some() {
                    return err(bc_line, format!("species.{i}: periodic species take no gamma"));
                }
                SpeciesParams::periodic(d, z)
            }
            "dirichlet" => {
                let gamma = gamma.ok_or(ConfigError {
                    line: bc_line,
                    message: format!("species.{i}: dirichlet species need species.{i}.gamma"),
                })?;
                SpeciesParams::dirichlet(d, z, gamma)
            }
            "blocking" => {
                if gamma.is_some() {
                    return err(bc_line, format!("species.{i}: blocking species take no gamma"));
                }
                SpeciesParams::blocking(d, z)
            }
            other => {
                return err(
                    bc_line,
                    format!("species.{i}: unknown bc `{other}`; expected periodic, dirichlet, or blocking"),
                )
            }
        };
        let domain_tag = match domain {
            DomainKind::Torus => npns_core::grid::Domain::Torus2Pi,
            DomainKind::Square => npns_core::grid::Domain::UnitSquareDirichlet,
        };
        if let Err(e) = params.validate(domain_tag) {
            return err(bc_line, format!("species.{i}: {e}"));
        }
        out.push(params);
    }
    Ok(out)
}

/// When every charged species has a pinned boundary trace, neutrality cannot
/// be restored by adjusting free means, so the traces must already balance.
fn check_neutrality_feasibility(species: &[SpeciesParams]) -> Result<(), ConfigError> {
    let any_free_charged = species
        .iter()
        .any(|p| p.valence != 0.0 && !matches!(p.bc, BoundaryKind::Dirichlet { .. }));
    if any_free_charged {
        return Ok(());
    }
    let pinned: f64 = species
        .iter()
        .map(|p| match p.bc {
            BoundaryKind::Dirichlet { gamma } => p.valence * gamma,
            _ => 0.0,
        })
        .sum();
    if pinned.abs() > 1e-12 {
        return err(
            None,
            format!(
                "no adjustable charged species and the boundary traces carry net charge \
                 {pinned:+.3e}; the neutral steady state is unreachable"
            ),
        );
    }
    Ok(())
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut r = Reader::parse(text)?;

    let (domain_line, domain_name) = r
        .str_opt("domain")
        .map(|(l, v)| (Some(l), v))
        .unwrap_or((None, "torus".to_string()));
    let domain = match domain_name.as_str() {
        "torus" => DomainKind::Torus,
        "square" => DomainKind::Square,
        other => return err(domain_line, format!("unknown domain `{other}`")),
    };

    let nx = r.usize_or("grid.nx", 64)?;
    let ny = r.usize_or("grid.ny", nx)?;

    let species = parse_species(&mut r, domain)?;
    check_neutrality_feasibility(&species)?;

    let noise = {
        let kind = r.str_opt("noise.kind");
        let amplitudes = r.f64_list_opt("noise.amplitudes")?;
        match kind {
            None => NoiseKind::Zero,
            Some((line, kind)) => match kind.as_str() {
                "zero" => NoiseKind::Zero,
                "torus_low" | "square_stokes" => {
                    let amplitudes = amplitudes.ok_or(ConfigError {
                        line: Some(line),
                        message: "noise needs noise.amplitudes".into(),
                    })?;
                    if amplitudes.iter().any(|a| *a < 0.0) {
                        return err(Some(line), "noise amplitudes must be nonnegative");
                    }
                    match (kind.as_str(), domain) {
                        ("torus_low", DomainKind::Torus) => NoiseKind::TorusLow { amplitudes },
                        ("square_stokes", DomainKind::Square) => {
                            NoiseKind::SquareStokes { amplitudes }
                        }
                        _ => {
                            return err(
                                Some(line),
                                format!("noise kind `{kind}` does not match domain `{domain_name}`"),
                            )
                        }
                    }
                }
                other => return err(Some(line), format!("unknown noise kind `{other}`")),
            },
        }
    };

    let force = parse_force(&mut r)?;

    let dt = r.f64_req("time.dt")?;
    if !(dt > 0.0) {
        return err(None, format!("time.dt must be positive, got {dt}"));
    }
    let t_final = r.f64_or("time.t_final", 0.0)?;
    if t_final < 0.0 {
        return err(None, format!("time.t_final must be nonnegative, got {t_final}"));
    }

    let seed = r.u64_opt("run.seed")?.unwrap_or(0);
    let threads = r.usize_opt("run.threads")?;
    let out = r
        .str_opt("run.out")
        .map(|(_, v)| PathBuf::from(v))
        .unwrap_or_else(|| PathBuf::from("out"));

    let (exp_line, exp_name) = r
        .str_opt("run.experiment")
        .map(|(l, v)| (Some(l), v))
        .unwrap_or((None, "simulate".to_string()));
    let experiment = match exp_name.as_str() {
        "simulate" => Experiment::Simulate,
        "decay" => Experiment::Decay,
        "picard" => Experiment::Picard,
        "identities" => Experiment::Identities,
        "elliptic" => Experiment::Elliptic,
        "kb" => Experiment::Kb,
        "couple" => Experiment::Couple,
        "expergo" => Experiment::Expergo,
        "moments" => Experiment::Moments,
        other => return err(exp_line, format!("unknown experiment `{other}`")),
    };

    let init_seed = r.u64_opt("init.seed")?.unwrap_or(seed);
    let epsilon = r.f64_or("init.epsilon", 0.1)?;
    let (init_line, init_name) = r
        .str_opt("init.kind")
        .map(|(l, v)| (Some(l), v))
        .unwrap_or((None, "neutral".to_string()));
    let init = match init_name.as_str() {
        "neutral" => InitKind::Neutral,
        "steady_plus_perturbation" => InitKind::SteadyPlusPerturbation { epsilon },
        "two_species" => InitKind::TwoSpecies,
        other => return err(init_line, format!("unknown init kind `{other}`")),
    };

    let phi_gamma = r.f64_or("phi.gamma", 0.0)?;
    let nonlinear_terms = r.bool_or("step.nonlinear", true)?;
    let clamp_negative = r.bool_or("step.clamp_negative", false)?;
    let galerkin_modes = r.usize_or("step.galerkin_modes", 16)?;

    if let NoiseKind::SquareStokes { amplitudes } = &noise {
        if amplitudes.len() > galerkin_modes {
            return err(
                None,
                format!(
                    "{} noise modes exceed step.galerkin_modes = {galerkin_modes}",
                    amplitudes.len()
                ),
            );
        }
    }

    let params = ExperimentParams {
        sample_every: r.usize_or("simulate.sample_every", 10)?,
        checkpoint_every: r.usize_or("simulate.checkpoint_every", 0)?,
        picard_sweeps: r.usize_or("picard.sweeps", 12)?,
        picard_tol: r.f64_or("picard.tol", 1e-10)?,
        identities_samples: r.usize_or("identities.samples", 50)?,
        elliptic_samples: r.usize_or("elliptic.samples", 100)?,
        elliptic_resolutions: r.usize_list_or("elliptic.resolutions", &[64, 128, 256])?,
        kb_t_list: r
            .f64_list_opt("kb.t_list")?
            .unwrap_or_else(|| vec![50.0, 100.0, 200.0]),
        kb_paths: r.usize_or("kb.paths", 64)?,
        kb_second_seed: r.u64_opt("kb.second_seed")?,
        couple_lambda: r.f64_or("couple.lambda", 64.0)?,
        couple_modes: r.usize_or("couple.modes", 16)?,
        couple_budget: r.f64_or("couple.budget", 1.0)?,
        couple_paths: r.usize_or("couple.paths", 64)?,
        couple_threshold: r.f64_or("couple.threshold", 1e-6)?,
        couple_companion_seed: r.u64_opt("couple.companion_seed")?,
        expergo_observable: r
            .str_opt("expergo.observable")
            .map(|(_, v)| v)
            .unwrap_or_else(|| "kinetic_energy".to_string()),
        expergo_t_grid: r
            .f64_list_opt("expergo.t_grid")?
            .unwrap_or_else(|| vec![1.0, 2.0, 4.0, 8.0]),
        expergo_paths: r.usize_or("expergo.paths", 200)?,
        expergo_reference_t: r.f64_opt("expergo.reference_t")?,
        moments_quantity: r
            .str_opt("moments.quantity")
            .map(|(_, v)| v)
            .unwrap_or_else(|| "energy_linear".to_string()),
        moments_eta: r.f64_or("moments.eta", 0.1)?,
        moments_paths: r.usize_or("moments.paths", 100)?,
        moments_sample_every: r.usize_or("moments.sample_every", 10)?,
    };

    r.finish()?;

    Ok(RunConfig {
        domain,
        nx,
        ny,
        species,
        noise,
        force,
        dt,
        t_final,
        seed,
        threads,
        experiment,
        init,
        init_seed,
        phi_gamma,
        nonlinear_terms,
        clamp_negative,
        galerkin_modes,
        out,
        params,
    })
}

/// FNV-1a over the resolved config serialization; stable across runs on the
/// same build, used to stamp output files.
pub fn config_hash(config: &RunConfig) -> String {
    let text = serde_json::to_string(config).expect("config serializes");
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
# two-species torus run
species.1.z = 1
species.1.d = 1.0
species.2.z = -1
species.2.d = 1.0
time.dt = 0.01
";

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.domain, DomainKind::Torus);
        assert_eq!((cfg.nx, cfg.ny), (64, 64));
        assert_eq!(cfg.species.len(), 2);
        assert_eq!(cfg.species[0].valence, 1.0);
        assert_eq!(cfg.species[1].valence, -1.0);
        assert_eq!(cfg.experiment, Experiment::Simulate);
        assert_eq!(cfg.noise, NoiseKind::Zero);
        assert_eq!(cfg.t_final, 0.0);
        assert_eq!(cfg.seed, 0);
    }

    #[test]
    fn duplicate_key_error_names_both_lines() {
        let text = format!("{MINIMAL}time.dt = 0.02\n");
        let e = parse_config(&text).unwrap_err();
        assert_eq!(e.line, Some(7));
        assert!(e.message.contains("line 6"), "{}", e.message);
    }

    #[test]
    fn unknown_key_is_an_error_with_line() {
        let text = format!("{MINIMAL}time.dtt = 0.02\n");
        let e = parse_config(&text).unwrap_err();
        assert_eq!(e.line, Some(7));
        assert!(e.message.contains("unknown key"), "{}", e.message);
    }

    #[test]
    fn blocking_on_torus_is_rejected() {
        let text = "\
species.1.z = 1
species.1.d = 1.0
species.1.bc = blocking
time.dt = 0.01
";
        let e = parse_config(text).unwrap_err();
        assert!(e.message.contains("torus"), "{}", e.message);
    }

    #[test]
    fn square_species_default_to_dirichlet_and_need_gamma() {
        let text = "\
domain = square
grid.nx = 16
species.1.z = 1
species.1.d = 1.0
time.dt = 0.01
";
        let e = parse_config(text).unwrap_err();
        assert!(e.message.contains("gamma"), "{}", e.message);

        let ok = format!("{text}species.1.gamma = 0.0\n");
        let cfg = parse_config(&ok).unwrap();
        assert_eq!(
            cfg.species[0].bc,
            BoundaryKind::Dirichlet { gamma: 0.0 }
        );
    }

    #[test]
    fn all_pinned_charged_species_must_balance() {
        let text = "\
domain = square
species.1.z = 1
species.1.d = 1.0
species.1.gamma = 1.0
species.2.z = -1
species.2.d = 1.0
species.2.gamma = 0.5
time.dt = 0.01
";
        let e = parse_config(text).unwrap_err();
        assert!(e.message.contains("net charge"), "{}", e.message);

        let balanced = text.replace("species.2.gamma = 0.5", "species.2.gamma = 1.0");
        assert!(parse_config(&balanced).is_ok());
    }

    #[test]
    fn force_presets_parse() {
        let tg = format!("{MINIMAL}force.preset = taylor_green\nforce.amplitude = 0.3\n");
        assert_eq!(
            parse_config(&tg).unwrap().force,
            ForceSpec::TaylorGreen { amplitude: 0.3 }
        );
        let sm = format!("{MINIMAL}force.preset = single_mode(1, -2)\n");
        assert_eq!(
            parse_config(&sm).unwrap().force,
            ForceSpec::SingleMode {
                kx: 1,
                ky: -2,
                amplitude: 1.0
            }
        );
        let bad = format!("{MINIMAL}force.preset = single_mode(0, 0)\n");
        assert!(parse_config(&bad).is_err());
        let bump = format!("{MINIMAL}force.preset = bump\nforce.width = 0.8\n");
        assert_eq!(
            parse_config(&bump).unwrap().force,
            ForceSpec::Bump {
                amplitude: 1.0,
                width: 0.8
            }
        );
    }

    #[test]
    fn noise_kind_must_match_domain() {
        let text = format!("{MINIMAL}noise.kind = square_stokes\nnoise.amplitudes = 0.1\n");
        let e = parse_config(&text).unwrap_err();
        assert!(e.message.contains("domain"), "{}", e.message);
        let ok = format!("{MINIMAL}noise.kind = torus_low\nnoise.amplitudes = 0.1, 0.1\n");
        assert_eq!(
            parse_config(&ok).unwrap().noise,
            NoiseKind::TorusLow {
                amplitudes: vec![0.1, 0.1]
            }
        );
    }

    #[test]
    fn species_index_gaps_are_rejected() {
        let text = "\
species.1.z = 1
species.1.d = 1.0
species.3.z = -1
species.3.d = 1.0
time.dt = 0.01
";
        let e = parse_config(text).unwrap_err();
        assert!(e.message.contains("no gaps"), "{}", e.message);
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let a = parse_config(MINIMAL).unwrap();
        let b = parse_config(MINIMAL).unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        let c = parse_config(&format!("{MINIMAL}run.seed = 5\n")).unwrap();
        assert_ne!(config_hash(&a), config_hash(&c));
    }
}
