//! `tripwire`: command-line front end for the quantum tripwire simulator.
//!
//! Exit status: 0 ok, 1 alarm or failed broadcast check, 2 usage or
//! configuration error, 3 runtime error.

mod commands;
mod config;
mod quantity;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use tripwire_core::io::RecordFormat;
use tripwire_core::AlarmConfig;

use commands::{RunError, Status};
use config::{ConfigError, Resolved, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "tripwire",
    version,
    about = "Mach-Zehnder quantum tripwire simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form and oracle counts for every intrusion scenario.
    Analytic(Common),
    /// Side-intrusion counts over a range of path delays.
    SweepDelta(Common),
    /// Monte Carlo run with monitor verdict; exits 1 on alarm.
    Simulate(Common),
    /// Compare recorded outcomes with a published phase schedule.
    VerifyBroadcast(VerifyArgs),
}

#[derive(Args)]
struct Common {
    /// Scenario configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout for tables when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    schedule: PathBuf,
    /// Optional configuration supplying the alarm settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    JsonLines,
}

impl From<Format> for RecordFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => RecordFormat::Csv,
            Format::JsonLines => RecordFormat::JsonLines,
        }
    }
}

enum Failure {
    Config(ConfigError),
    Run(RunError),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) | Failure::Run(RunError::Usage(_)) => 2,
            Failure::Run(_) => 3,
        }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        Failure::Run(e)
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "configuration error: {e}"),
            Failure::Run(e) => write!(f, "error: {e}"),
        }
    }
}

fn load(path: &Path, seed: Option<u64>) -> Result<Resolved, Failure> {
    let mut resolved = ScenarioConfig::load(path)
        .and_then(|c| c.resolve())
        .map_err(Failure::Config)?;
    if let Some(seed) = seed {
        resolved.seed = seed;
    }
    Ok(resolved)
}

fn run(cli: Cli) -> Result<Status, Failure> {
    let table = |common: &Common| -> Result<(Resolved, RecordFormat), Failure> {
        let cfg = load(&common.config, common.seed)?;
        let format = common
            .format
            .map(RecordFormat::from)
            .or(cfg.output.format)
            .unwrap_or(RecordFormat::Csv);
        Ok((cfg, format))
    };
    match cli.command {
        Command::Analytic(c) => {
            let (cfg, format) = table(&c)?;
            Ok(commands::cmd_analytic(&cfg, c.out.as_deref(), format)?)
        }
        Command::SweepDelta(c) => {
            let (cfg, format) = table(&c)?;
            Ok(commands::cmd_sweep_delta(&cfg, c.out.as_deref(), format)?)
        }
        Command::Simulate(c) => {
            let (cfg, format) = table(&c)?;
            Ok(commands::cmd_simulate(&cfg, c.out.as_deref(), format)?)
        }
        Command::VerifyBroadcast(v) => {
            let alarm = match &v.config {
                Some(path) => load(path, None)?.alarm,
                None => AlarmConfig::default(),
            };
            Ok(commands::cmd_verify_broadcast(
                &v.records,
                &v.schedule,
                &alarm,
                v.out.as_deref(),
            )?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Alarm) => ExitCode::from(1),
        Err(e) => {
            eprintln!("tripwire: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
