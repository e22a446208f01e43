//! Batch front end for the pricing engine.
//!
//! Four commands cover the workflow: `price` runs one configuration and
//! writes the terminal slice, `compare` cross-checks the solver against the
//! enabled oracles, `converge` runs a resolution ladder, and `check` runs the
//! built-in property suite. Exit codes are frozen for scripting: 0 success,
//! 1 failed tolerance or property gate (or an output I/O failure), 2
//! configuration problems, 3 numerical failures, 4 model constraint
//! violations.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "wickpde",
    version,
    about = "Finite-difference option pricing for deformed diffusion models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration file (TOML). Required by price, compare, converge.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Directory for CSV and report outputs, created if missing.
    /// Without it, artifacts land in the working directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Overrides the oracle seed from the config (also seeds `check`).
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Suppresses stdout; errors and warnings still go to stderr.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Price the configured instrument and write the terminal slice as CSV.
    Price,
    /// Price, then cross-check against every enabled oracle with tolerance gates.
    Compare,
    /// Run a resolution ladder and report observed convergence orders.
    Converge,
    /// Run the built-in property suite (needs no config file).
    Check,
}

/// Classified command failure carrying the scripting exit code.
#[derive(Debug)]
pub enum CliError {
    /// Exit 2: flag, config file, or expression problems.
    Config(String),
    /// Exit 3: numerical failure during assembly, stepping, or readout.
    Numerics(String),
    /// Exit 4: a model constraint does not hold.
    Constraint(String),
    /// Exit 1: the command ran but a tolerance or property gate failed.
    Gate(String),
    /// Exit 1: filesystem failure while emitting artifacts.
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Gate(_) | CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numerics(_) => 3,
            CliError::Constraint(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m)
            | CliError::Numerics(m)
            | CliError::Constraint(m)
            | CliError::Gate(m)
            | CliError::Io(m) => m,
        }
    }
}

impl From<wickpde::Error> for CliError {
    fn from(e: wickpde::Error) -> Self {
        use wickpde::Error as E;
        match &e {
            E::Syntax { .. } | E::UnknownIdentifier { .. } | E::InvalidInput(_) => {
                CliError::Config(e.to_string())
            }
            E::Domain(_) | E::Numerics(_) => CliError::Numerics(e.to_string()),
            E::Constraint(_) | E::Positivity(_) => CliError::Constraint(e.to_string()),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let ctx = commands::Ctx {
        out_dir: cli.out,
        seed: cli.seed,
        quiet: cli.quiet,
    };
    if matches!(cli.command, Command::Check) {
        return commands::check(&ctx);
    }
    let path = cli.config.as_deref().ok_or_else(|| {
        CliError::Config("missing --config <PATH>; price, compare, and converge need one".into())
    })?;
    let cfg = config::load(path)?;
    match cli.command {
        Command::Price => commands::price(&cfg, &ctx),
        Command::Compare => commands::compare(&cfg, &ctx),
        Command::Converge => commands::converge(&cfg, &ctx),
        Command::Check => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors; everything else is a
            // usage problem and lands in the config exit class.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
