//! `needlet-lab`: scale diagnostics, Monte Carlo CLT experiments and
//! admissible-resolution tables.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::KeyValues;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("degenerate regime: {0}")]
    Degenerate(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Degenerate(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

/// Maps a core error onto the exit-code classes, naming the config key under
/// `section` when the error points at a parameter.
pub fn core_error(e: needlet_core::Error, section: &str) -> CliError {
    use needlet_core::Error as E;
    match e {
        E::InvalidParameter { name, reason } => CliError::Config(format!("{section}.{name}: {reason}")),
        E::OutOfRange { .. } | E::TooFewSamples { .. } | E::DuplicatePoints(..) => {
            CliError::Config(format!("{section}: {e}"))
        }
        E::Degenerate(_) | E::EmptyBand { .. } | E::NoAdmissibleLevel(_) => CliError::Degenerate(e.to_string()),
        other => CliError::Runtime(other.to_string()),
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "needlet-lab",
    version,
    about = "Shrinking needlets, Poisson needlet fields and CLT diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Scale, weight and frame diagnostics of the configured system.
    System(Overrides),
    /// Monte Carlo experiments, one report per (j, nu) plus a sweep table.
    Clt(Overrides),
    /// Largest admissible level per resolution context and intensity.
    Tables(Overrides),
}

#[derive(Args, Debug, Default)]
struct Overrides {
    /// key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    kind: Option<String>,
    /// Comma-separated levels.
    #[arg(long)]
    j: Option<String>,
    /// Comma-separated intensities.
    #[arg(long)]
    nu: Option<String>,
    #[arg(long)]
    reps: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    dim: Option<String>,
    #[arg(long)]
    slack: Option<String>,
    /// Pooled locations, or vector length for the multi-coefficient kinds.
    #[arg(long)]
    points: Option<String>,
    /// Minimal geodesic separation of the locations.
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// json, csv or both.
    #[arg(long)]
    format: Option<String>,
}

impl Overrides {
    fn load(&self) -> Result<config::RunConfig, CliError> {
        let mut kv = match &self.config {
            Some(p) => KeyValues::read(p)?,
            None => KeyValues::default(),
        };
        let pairs = [
            ("experiment.kind", &self.kind),
            ("experiment.j", &self.j),
            ("experiment.nu", &self.nu),
            ("experiment.reps", &self.reps),
            ("experiment.seed", &self.seed),
            ("experiment.alpha", &self.alpha),
            ("experiment.dim", &self.dim),
            ("experiment.slack", &self.slack),
            ("experiment.points", &self.points),
            ("experiment.delta", &self.delta),
            ("output.dir", &self.out),
            ("output.format", &self.format),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                kv.set(key, v)?;
            }
        }
        kv.into_config()
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::System(o) => commands::system(&o.load()?),
        Command::Clt(o) => commands::clt(&o.load()?),
        Command::Tables(o) => commands::tables(&o.load()?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("needlet-lab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
