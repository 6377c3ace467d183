//! `polaris`: run scenarios, compute steady states, sweep parameters and
//! verify the build against the acceptance checks.
//!
//! Exit codes: 0 success, 1 scenario failure, 2 configuration error.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Failure;

#[derive(Parser, Debug)]
#[command(name = "polaris", version, about = "Bulk/surface drift-diffusion polarisation solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate a scenario in time, writing diagnostics and snapshots.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `t_end` from the config.
        #[arg(long)]
        t_end: Option<f64>,
        /// Overrides `[output] dir` from the config.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Fixed-point steady state at membrane mass `mu`.
    Steady {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Closed-form spherically symmetric steady state of total mass `mass`
    /// (radial-ball configs only).
    SteadySpherical {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        mass: f64,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Independent runs over a list of values for one setting. Parallelism is
    /// capped by `POLARIS_THREADS`.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Setting name, `key` or `section.key` (e.g. `beta`, `stepper.dt_max`).
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<String>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run the built-in acceptance checks and print one line per criterion.
    Verify {
        /// Run only these criteria.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u32>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, t_end, out_dir } => commands::run(&config, t_end, out_dir),
        Command::Steady { config, mu, out_dir } => commands::steady(&config, mu, out_dir),
        Command::SteadySpherical { config, mass, out_dir } => commands::steady_spherical(&config, mass, out_dir),
        Command::Sweep {
            config,
            param,
            values,
            out_dir,
        } => commands::sweep(&config, &param, &values, out_dir),
        Command::Verify { only } => commands::verify(&only),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Scenario(msg)) => {
            eprintln!("polaris: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("polaris: configuration error: {msg}");
            ExitCode::from(2)
        }
    }
}
