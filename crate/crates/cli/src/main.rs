use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use robuststop_cli::commands::{self, SweepParam};
use robuststop_cli::config::RunConfig;
use robuststop_cli::CliError;

/// Robust optimal stopping of regime-switching diffusions.
///
/// Set ROBUSTSTOP_THREADS to cap the worker threads used by sweeps,
/// aggregation and simulation.
#[derive(Parser)]
#[command(name = "robuststop", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured problem; writes the solution CSV and `<out>_thresholds.csv`.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve once per parameter value (concurrently) into an output directory.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "theta")]
        param: Param,
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        values: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Error norms between the two-time-scale problem and its limit, one row per ε.
    Aggregate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo value of the stopping rule read off a stored solution.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        solution: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify a stored solution against the config without re-solving.
    Check {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        solution: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Param {
    Theta,
    Epsilon,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("ROBUSTSTOP_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Input(format!("ROBUSTSTOP_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Input(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Solve { config, out } => commands::solve_cmd(&RunConfig::load(&config)?, &out),
        Command::Sweep {
            config,
            param,
            values,
            out,
        } => {
            let param = match param {
                Param::Theta => SweepParam::Theta,
                Param::Epsilon => SweepParam::Epsilon,
            };
            commands::sweep_cmd(&RunConfig::load(&config)?, param, &values, &out)
        }
        Command::Aggregate { config, out } => commands::aggregate_cmd(&RunConfig::load(&config)?, &out),
        Command::Simulate { config, solution, out } => {
            commands::simulate_cmd(&RunConfig::load(&config)?, &solution, &out)
        }
        Command::Check { config, solution } => commands::check_cmd(&RunConfig::load(&config)?, &solution),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors are input errors; --help and --version are not
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
