mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use co2bayes_core::Error as CoreError;

use output::OutputError;

/// Stochastic CO2 model fitting and ventilation assessment.
#[derive(Debug, Parser)]
#[command(name = "co2bayes", version, about)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run configuration; defaults apply to omitted keys
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overrides the config
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Log progress and diagnostics to stderr
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a built-in chamber scenario (test1..test7)
    Simulate {
        scenario: String,
    },
    /// Sample the posterior of (Q, C_out, E, sigma) for a CO2 series
    Infer {
        #[arg(long)]
        data: PathBuf,
    },
    /// Posterior predictive check of a fitted series
    Ppc {
        #[arg(long)]
        posterior: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Segment occupied periods and assess ventilation per day
    Assess {
        /// CSV file or directory of CSV files
        #[arg(long)]
        data: PathBuf,
    },
    /// Steady-state CO2 thresholds over a CADR grid
    Thresholds {
        #[arg(long, conflicts_with = "params", required_unless_present = "params")]
        posterior: Option<PathBuf>,
        /// Inline JSON or a file: {"e_lps", "c_out_ppm", "sigma", "occupancy"?}
        #[arg(long)]
        params: Option<String>,
        /// Comma list (0,200,400) or range start:stop:step in cfm
        #[arg(long)]
        cadr_grid: Option<String>,
    },
}

/// Bad user input (config, data, arguments).
#[derive(Debug)]
pub struct InputError(pub String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_NOT_CONVERGED: u8 = 2;
pub const EXIT_INPUT: u8 = 3;
pub const EXIT_UNREACHABLE: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<OutputError>() {
            return EXIT_FAILURE;
        }
        if cause.is::<InputError>() {
            return EXIT_INPUT;
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return match e {
                CoreError::PosteriorUnreachable { .. } => EXIT_UNREACHABLE,
                CoreError::PriorSetRun { source, .. } if matches!(**source, CoreError::PosteriorUnreachable { .. }) => {
                    EXIT_UNREACHABLE
                }
                CoreError::InvalidInput(_)
                | CoreError::NonFinite(_)
                | CoreError::NoVentilation
                | CoreError::UnstableStep { .. }
                | CoreError::SeriesTooShort { .. }
                | CoreError::DegenerateData
                | CoreError::PriorSetRun { .. }
                | CoreError::Parse { .. }
                | CoreError::TooManyBadRows { .. }
                | CoreError::Empty(_)
                | CoreError::Io(_)
                | CoreError::Json(_)
                | CoreError::Csv(_) => EXIT_INPUT,
            };
        }
    }
    EXIT_FAILURE
}

fn main() -> ExitCode {
    // usage errors are input errors; clap's own code 2 means non-convergence here
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { EXIT_OK });
        }
    };
    let level = if cli.common.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = match &cli.command {
        Command::Simulate { scenario } => commands::simulate(&cli.common, scenario),
        Command::Infer { data } => commands::infer(&cli.common, data),
        Command::Ppc { posterior, data } => commands::ppc(&cli.common, posterior, data),
        Command::Assess { data } => commands::assess(&cli.common, data),
        Command::Thresholds {
            posterior,
            params,
            cadr_grid,
        } => commands::thresholds(&cli.common, posterior.as_deref(), params.as_deref(), cadr_grid.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
