//! Command-line driver: `run` executes a configured experiment, `verify`
//! only parses and validates, `resume` continues a checkpointed run, `plot`
//! re-emits gnuplot scripts for an existing report directory.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 configuration error.

mod config;
mod plots;
mod runner;

use clap::{Parser, Subcommand};
use runner::{CliError, Runner};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "npns", about = "Numerical laboratory for stochastic electrokinetic flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment named in the config file.
    Run {
        config: PathBuf,
        /// Master seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory override.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker pool size override (default: available parallelism).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Parse and validate a config file without running anything.
    Verify { config: PathBuf },
    /// Continue a run from a checkpoint stem (the path without the `.fields`
    /// / `.json` suffix); reads the resolved config saved beside it.
    Resume {
        checkpoint: PathBuf,
        /// Continue to this time instead of the configured horizon.
        #[arg(long)]
        until: Option<f64>,
        /// Output directory override; defaults to the checkpoint directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit gnuplot scripts for every CSV series in a report directory.
    Plot { dir: PathBuf },
}

fn load_config(path: &Path) -> Result<config::RunConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(config::parse_config(&text)?)
}

fn init_threads(threads: Option<usize>) {
    if let Some(k) = threads {
        // Ignore failure: the global pool can only be set once per process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    }
}

fn real_main() -> Result<(), CliError> {
    match Cli::parse().command {
        Command::Run {
            config,
            seed,
            out,
            threads,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
                cfg.init_seed = s;
            }
            if let Some(o) = out {
                cfg.out = o;
            }
            init_threads(threads.or(cfg.threads));
            Runner::new(cfg)?.execute()
        }
        Command::Verify { config } => {
            let cfg = load_config(&config)?;
            println!(
                "ok: {:?} experiment, {:?} {}x{}, {} species, hash {}",
                cfg.experiment,
                cfg.domain,
                cfg.nx,
                cfg.ny,
                cfg.species.len(),
                config::config_hash(&cfg)
            );
            Ok(())
        }
        Command::Resume {
            checkpoint,
            until,
            out,
        } => {
            let dir = checkpoint
                .parent()
                .filter(|p| !p.as_os_str().is_empty())
                .map(Path::to_path_buf)
                .unwrap_or_else(|| PathBuf::from("."));
            let resolved = dir.join("config_resolved.json");
            let text = fs::read_to_string(&resolved).map_err(|e| {
                CliError::Config(format!(
                    "cannot read {} (needed to resume): {e}",
                    resolved.display()
                ))
            })?;
            let value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("bad resolved config: {e}")))?;
            let mut cfg: config::RunConfig =
                serde_json::from_value(value["config"].clone())
                    .map_err(|e| CliError::Config(format!("bad resolved config: {e}")))?;
            cfg.out = out.unwrap_or(dir);
            init_threads(cfg.threads);
            Runner::new(cfg)?.resume(&checkpoint, until)
        }
        Command::Plot { dir } => {
            let scripts = plots::plot_emit(&dir)
                .map_err(|e| CliError::Config(format!("plot emission failed: {e}")))?;
            println!("wrote {} scripts", scripts.len());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            match e {
                CliError::Numerical(_) => ExitCode::from(1),
                CliError::Config(_) => ExitCode::from(2),
            }
        }
    }
}
