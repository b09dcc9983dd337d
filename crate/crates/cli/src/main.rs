mod commands;
mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{Failure, Outcome};
use crate::config::RunConfig;

/// Controllability analysis and control synthesis for coupled
/// transport-diffusion systems on the circle.
#[derive(Parser)]
#[command(name = "ptctl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the configuration seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Structural analysis: minimal time, Kalman depth, exceptional modes, verdict.
    Analyze(RunArgs),
    /// Compute a null control and write its coefficients.
    Control(RunArgs),
    /// Controllability diagnostics over a list of horizons.
    Sweep(RunArgs),
    /// Observability quotient along concentrated adjoint packets.
    Wkb(RunArgs),
    /// Check the built-in 2x2 cases against their known answers.
    Casebook {
        /// Also write report.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(args: &RunArgs) -> Outcome<RunConfig> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Failure::new(1, format!("cannot read {}: {e}", args.config.display())))?;
    let mut cfg: RunConfig =
        serde_json::from_str(&text).map_err(|e| Failure::new(2, format!("invalid config {}: {e}", args.config.display())))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Outcome<String> {
    let with = |args: &RunArgs, f: fn(RunConfig, &Path) -> Outcome<String>| f(load(args)?, &args.out);
    match &cli.command {
        Command::Analyze(a) => with(a, commands::analyze),
        Command::Control(a) => with(a, commands::control),
        Command::Sweep(a) => with(a, commands::sweep),
        Command::Wkb(a) => with(a, commands::wkb),
        Command::Casebook { out } => commands::casebook(out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(text) => {
            let _ = writeln!(std::io::stdout(), "{text}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
