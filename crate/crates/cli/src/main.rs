//! `flrwpt`: configuration-driven experiments on perturbed FLRW cosmologies.
//!
//! Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numeric failure.

mod commands;
mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;

use flrw_perturb::random::rng_from_seed;

#[derive(Parser)]
#[command(name = "flrwpt", version, about = "Scalar perturbations of flat FLRW cosmologies on the 3-torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Background trajectory and tau time.
    Bg,
    /// Evolve perturbation data and write snapshots.
    Evolve,
    /// Singularity series: build, fit, roundtrip, leading exponent or the
    /// Gowdy analogue.
    Sing,
    /// Late-time profiles, reconstruction and regime sweeps.
    Late,
    /// Classify an equation of state or a (w, sigma) grid.
    Classify,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl From<flrw_perturb::Error> for CliError {
    fn from(e: flrw_perturb::Error) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Numeric(e.to_string())
        }
    }
}

/// Reads the config as JSON and pulls out the shared `seed` key (default 0).
fn load(path: Option<&Path>) -> Result<(serde_json::Value, u64), CliError> {
    let path = path.ok_or_else(|| CliError::Config("--config is required".into()))?;
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let seed = match value.as_object_mut().and_then(|o| o.remove("seed")) {
        None => 0,
        Some(v) => v.as_u64().ok_or_else(|| CliError::Config("`seed` must be an unsigned integer".into()))?,
    };
    Ok((value, seed))
}

fn parse<T: DeserializeOwned>(value: serde_json::Value) -> Result<T, CliError> {
    serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))
}

/// `sing` with `"mode": "gowdy"` takes the circle configuration.
fn take_gowdy(value: &mut serde_json::Value) -> bool {
    let gowdy = value.get("mode").and_then(|m| m.as_str()) == Some("gowdy");
    if gowdy {
        value.as_object_mut().map(|o| o.remove("mode"));
    }
    gowdy
}

fn run(cli: &Cli) -> Result<String, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Numeric(e.to_string()))?;
    }
    let out = cli.out.as_path();
    let (mut value, seed) = load(cli.config.as_deref())?;
    let mut rng = rng_from_seed(seed);
    // parse before touching the output directory
    let mkdir = || fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())));
    match cli.command {
        Command::Bg => {
            let c = parse(value)?;
            mkdir()?;
            commands::background(&c, out)
        }
        Command::Evolve => {
            let c = parse(value)?;
            mkdir()?;
            commands::evolve(&c, out, &mut rng)
        }
        Command::Sing if take_gowdy(&mut value) => {
            let c = parse(value)?;
            mkdir()?;
            commands::gowdy(&c, out, &mut rng)
        }
        Command::Sing => {
            let c = parse(value)?;
            mkdir()?;
            commands::singularity(&c, out, &mut rng)
        }
        Command::Late => {
            let c = parse(value)?;
            mkdir()?;
            commands::latetime(&c, out, &mut rng)
        }
        Command::Classify => {
            let c = parse(value)?;
            mkdir()?;
            commands::classify(&c, out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("flrwpt: {e}");
            ExitCode::from(e.code())
        }
    }
}
