//! Command-line front end for the safety-verification toolkit. Reports are
//! one JSON line on stdout; progress and diagnostics go to stderr. Exit
//! codes are the machine contract: 0 all checks passed, 1 a check failed,
//! 2 a check was inconclusive, 3 usage or configuration error.

mod commands;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "issf",
    version,
    about = "Compositional safety verification for two interconnected subsystems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample both subsystem barrier hypotheses over the scenario boxes.
    CheckSubsystems(RunArgs),
    /// Run the small-gain test and build the composed certificate.
    Compose(RunArgs),
    /// Simulate trajectories and check the certified set stays invariant.
    VerifyInvariance(RunArgs),
    /// Run the full pipeline on the bundled two-subsystem example.
    Example1(ExampleArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the scenario file.
    #[arg(long)]
    scenario: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct ExampleArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Override the scenario sampling and simulation seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the scenario sample count.
    #[arg(long)]
    samples: Option<usize>,
    /// Override the scenario trajectory count.
    #[arg(long)]
    trajectories: Option<usize>,
    /// Override the integration step.
    #[arg(long)]
    dt: Option<f64>,
    /// Override the simulation horizon.
    #[arg(long)]
    horizon: Option<f64>,
    /// Directory for CSV artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Expression in r to use as the scaling instead of constructing one.
    #[arg(long)]
    phi_override: Option<String>,
}

/// `ISSF_THREADS` caps the rayon pool; unset means one thread per core.
fn configure_threads() -> Result<(), String> {
    match std::env::var("ISSF_THREADS") {
        Ok(raw) => {
            let n: usize = raw
                .parse()
                .map_err(|_| format!("ISSF_THREADS must be a positive integer, got `{raw}`"))?;
            if n == 0 {
                return Err("ISSF_THREADS must be a positive integer, got `0`".to_string());
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| format!("thread pool: {e}"))
        }
        Err(std::env::VarError::NotPresent) => Ok(()),
        Err(e) => Err(format!("ISSF_THREADS: {e}")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes; everything else is
            // a usage error and must exit 3, not clap's default 2.
            let is_usage_error = e.use_stderr();
            let _ = e.print();
            return if is_usage_error {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Err(message) = configure_threads() {
        eprintln!("issf: {message}");
        return ExitCode::from(3);
    }
    let result = match &cli.command {
        Command::CheckSubsystems(args) => commands::cmd_check_subsystems(args),
        Command::Compose(args) => commands::cmd_compose(args),
        Command::VerifyInvariance(args) => commands::cmd_verify_invariance(args),
        Command::Example1(args) => commands::cmd_example1(args),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("issf: {e:#}");
            ExitCode::from(3)
        }
    }
}
