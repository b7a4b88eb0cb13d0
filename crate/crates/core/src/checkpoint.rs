//! Whole-state persistence: a binary field bundle plus a JSON sidecar with
//! everything needed to resume a run bitwise-identically, including the
//! random stream position.

use crate::error::{Error, Result};
use crate::fieldio;
use crate::grid::Grid;
use crate::noise::{NoiseDescriptor, NoiseSpec};
use crate::rngstream::{RngCounter, RngStream};
use crate::species::SpeciesParams;
use crate::state::{StepMonitor, StepOptions, SystemState};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

const META_VERSION: u32 = 1;

/// Sidecar metadata; the field bundle holds `u.x, u.y, c_0..c_{n-1}, phi,
/// f.x, f.y` in that order.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointMeta {
    version: u32,
    grid: Grid,
    n_species: usize,
    t: f64,
    step_index: u64,
    params: Vec<SpeciesParams>,
    phi_gamma: f64,
    noise: NoiseDescriptor,
    rng: RngCounter,
    options: StepOptions,
    monitor: StepMonitor,
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    let mut fields = stem.as_os_str().to_owned();
    fields.push(".fields");
    let mut meta = stem.as_os_str().to_owned();
    meta.push(".json");
    (PathBuf::from(fields), PathBuf::from(meta))
}

/// Writes `{stem}.fields` and `{stem}.json`, overwriting existing files.
pub fn write_checkpoint(state: &SystemState, stem: &Path) -> Result<()> {
    let (fields_path, meta_path) = paths(stem);
    let mut w = BufWriter::new(File::create(&fields_path)?);
    fieldio::write_field(&mut w, &state.u.x)?;
    fieldio::write_field(&mut w, &state.u.y)?;
    for ci in &state.c {
        fieldio::write_field(&mut w, ci)?;
    }
    fieldio::write_field(&mut w, &state.phi)?;
    fieldio::write_field(&mut w, &state.f.x)?;
    fieldio::write_field(&mut w, &state.f.y)?;
    w.flush()?;

    let meta = CheckpointMeta {
        version: META_VERSION,
        grid: state.grid,
        n_species: state.c.len(),
        t: state.t,
        step_index: state.step_index,
        params: state.params.clone(),
        phi_gamma: state.phi_gamma,
        noise: state.noise.descriptor.clone(),
        rng: state.rng.counter(),
        options: state.options.clone(),
        monitor: state.monitor.clone(),
    };
    let mut w = BufWriter::new(File::create(&meta_path)?);
    serde_json::to_writer_pretty(&mut w, &meta).map_err(Error::from)?;
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint pair back into a state that resumes the run exactly:
/// fields, time, step count, noise layout, and random stream position all
/// match what was saved.
pub fn read_checkpoint(stem: &Path) -> Result<SystemState> {
    let (fields_path, meta_path) = paths(stem);
    let meta: CheckpointMeta =
        serde_json::from_reader(BufReader::new(File::open(&meta_path)?)).map_err(Error::from)?;
    if meta.version != META_VERSION {
        return Err(Error::Format(format!(
            "checkpoint version {} unsupported (expected {META_VERSION})",
            meta.version
        )));
    }
    if meta.params.len() != meta.n_species {
        return Err(Error::Format(format!(
            "metadata lists {} species but {} parameter sets",
            meta.n_species,
            meta.params.len()
        )));
    }

    let mut r = BufReader::new(File::open(&fields_path)?);
    let mut next = || -> Result<_> {
        let f = fieldio::read_field(&mut r)?;
        if f.grid != meta.grid {
            return Err(Error::Format(
                "field bundle grid disagrees with metadata".into(),
            ));
        }
        Ok(f)
    };
    let ux = next()?;
    let uy = next()?;
    let mut c = Vec::with_capacity(meta.n_species);
    for _ in 0..meta.n_species {
        c.push(next()?);
    }
    let phi = next()?;
    let fx = next()?;
    let fy = next()?;

    let noise = NoiseSpec::from_descriptor(meta.grid, &meta.noise, meta.options.cache_dir.as_deref())?;
    let mut state = SystemState::new(
        crate::field::VectorField { x: ux, y: uy },
        c,
        meta.params,
        meta.phi_gamma,
        crate::field::VectorField { x: fx, y: fy },
        noise,
        RngStream::restore(&meta.rng),
        meta.options,
    )?;
    // The constructor re-derives the potential; restore the stored one so the
    // resumed state is bitwise what was saved even if solver defaults change.
    state.phi = phi;
    state.t = meta.t;
    state.step_index = meta.step_index;
    state.monitor = meta.monitor;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{ScalarField, VectorField};
    use crate::init::{make_initial_data, InitialKind};
    use crate::noise::NoiseSpec;
    use crate::step;

    fn noisy_state(grid: Grid) -> SystemState {
        let params = vec![
            SpeciesParams::periodic(1.0, 1.0),
            SpeciesParams::periodic(1.0, -1.0),
        ];
        let noise = NoiseSpec::torus_low_modes(grid, &[0.15; 4]).unwrap();
        make_initial_data(
            &InitialKind::TwoSpecies { seed: 42 },
            grid,
            &params,
            0.0,
            VectorField::zeros(grid),
            noise,
            StepOptions::default(),
        )
        .unwrap()
    }

    fn assert_states_identical(a: &SystemState, b: &SystemState) {
        assert_eq!(a.t, b.t);
        assert_eq!(a.step_index, b.step_index);
        assert_eq!(a.u.x.values, b.u.x.values);
        assert_eq!(a.u.y.values, b.u.y.values);
        assert_eq!(a.phi.values, b.phi.values);
        for (ca, cb) in a.c.iter().zip(&b.c) {
            assert_eq!(ca.values, cb.values);
        }
        assert_eq!(a.rng.counter(), b.rng.counter());
    }

    #[test]
    fn restart_is_bitwise_identical_to_uninterrupted_run() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("mid");
        let grid = Grid::torus(16, 16).unwrap();
        let dt = 0.01;

        let mut reference = noisy_state(grid);
        let mut resumed_src = reference.clone();
        for _ in 0..10 {
            step::step(&mut reference, dt).unwrap();
            step::step(&mut resumed_src, dt).unwrap();
        }
        write_checkpoint(&resumed_src, &stem).unwrap();
        for _ in 0..10 {
            step::step(&mut reference, dt).unwrap();
        }

        let mut resumed = read_checkpoint(&stem).unwrap();
        assert_states_identical(&resumed_src, &resumed);
        for _ in 0..10 {
            step::step(&mut resumed, dt).unwrap();
        }
        assert_states_identical(&reference, &resumed);
    }

    #[test]
    fn square_checkpoint_round_trips_with_galerkin_noise() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("sq");
        let grid = Grid::square(16, 16).unwrap();
        let c = vec![
            ScalarField::from_fn(grid, |x, y| {
                1.0 + 0.1 * (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin()
            }),
            ScalarField::constant(grid, 1.0),
        ];
        let params = vec![
            SpeciesParams::dirichlet(1.0, 1.0, 1.0),
            SpeciesParams::blocking(1.0, -1.0),
        ];
        let mut options = StepOptions::default();
        options.galerkin_modes = 6;
        options.cache_dir = Some(dir.path().join("cache"));
        let noise = NoiseSpec::square_stokes(grid, &[0.05, 0.05], options.cache_dir.as_deref())
            .unwrap();
        let mut state = SystemState::new(
            VectorField::zeros(grid),
            c,
            params,
            1.0,
            VectorField::zeros(grid),
            noise,
            RngStream::new(7, 0),
            options,
        )
        .unwrap();
        for _ in 0..5 {
            step::step(&mut state, 1e-3).unwrap();
        }
        write_checkpoint(&state, &stem).unwrap();
        let mut twin = read_checkpoint(&stem).unwrap();
        assert_states_identical(&state, &twin);
        // Both continue through the stochastic Galerkin path identically.
        step::step(&mut state, 1e-3).unwrap();
        step::step(&mut twin, 1e-3).unwrap();
        assert_states_identical(&state, &twin);
    }

    #[test]
    fn version_and_species_count_mismatches_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("bad");
        let state = noisy_state(Grid::torus(16, 16).unwrap());
        write_checkpoint(&state, &stem).unwrap();

        let meta_path = stem.with_extension("json");
        let text = std::fs::read_to_string(&meta_path).unwrap();
        std::fs::write(&meta_path, text.replace("\"version\": 1", "\"version\": 9")).unwrap();
        assert!(matches!(read_checkpoint(&stem), Err(Error::Format(_))));

        std::fs::write(
            &meta_path,
            text.replace("\"n_species\": 2", "\"n_species\": 3"),
        )
        .unwrap();
        assert!(read_checkpoint(&stem).is_err());
    }
}
