//! `valdesign`: design and run validation experiments from a config file.

mod commands;
mod config;
mod error;
mod family;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Context;
use crate::config::Loaded;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "valdesign", version, about = "Optimal design of validation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    config: PathBuf,
    /// Master seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, env = "VALDESIGN_THREADS")]
    threads: Option<usize>,
    /// Root of the run directories; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Log more (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Choose the validation scenario.
    DesignScenario(Common),
    /// Choose the observable and sensor location.
    DesignSensor(Common),
    /// Run the validation workflow and report the verdict.
    Validate {
        #[command(flatten)]
        common: Common,
        /// CSV of experimental observations (`y` column).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Sample the posterior of the model parameters.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// CSV of calibration observations (`x…, z…, y`).
        #[arg(long)]
        observations: Option<PathBuf>,
    },
    /// Search the full control space for the prediction scenario.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Number of starts; overrides the optimizer setting.
        #[arg(long)]
        starts: Option<usize>,
    },
    /// Propagate parameter uncertainty to the quantity of interest.
    Propagate(Common),
}

fn setup(c: &Common) -> Result<Context, CliError> {
    let level = match c.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    if let Some(n) = c.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start thread pool: {e}")))?;
    }
    Context::new(Loaded::read(&c.config)?, c.seed, c.out.clone())
}

fn run(cli: Cli) -> Result<commands::Outcome, CliError> {
    match cli.command {
        Command::DesignScenario(c) => commands::design_scenario(&setup(&c)?),
        Command::DesignSensor(c) => commands::design_sensor(&setup(&c)?),
        Command::Validate { common, data } => commands::validate(&setup(&common)?, data.as_deref()),
        Command::Calibrate {
            common,
            observations,
        } => commands::calibrate(&setup(&common)?, observations.as_deref()),
        Command::Verify { common, starts } => commands::verify(&setup(&common)?, starts),
        Command::Propagate(c) => commands::propagate_cmd(&setup(&c)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(o) => {
            println!("{}", o.status);
            ExitCode::from(o.code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
