//! `memtrack`: batch front end for the tracking-synthesis routes.

mod commands;
mod config;
mod output;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Route, Settings};
use config::Source;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Numerical(String),
    #[error(transparent)]
    Core(#[from] memtrack::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) | CliError::Io(_) => 2,
            CliError::Core(e) if e.is_input_error() => 2,
            CliError::Core(_) | CliError::Numerical(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(name = "memtrack", version, about = "Optimal tracking for linear systems with memory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Instance configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the number of grid steps.
    #[arg(long)]
    n: Option<usize>,
    /// Keep P2 slices every this many nodes.
    #[arg(long)]
    checkpoint: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the plant under the configured control.
    Simulate(Common),
    /// Compute the optimal control by one route.
    Synthesize {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        route: Option<Route>,
    },
    /// Run all routes and report their discrepancies.
    Compare(Common),
    /// Tabulate discrepancies under grid refinement.
    Convergence {
        #[command(flatten)]
        common: Common,
        /// Grid sizes, e.g. `50,100,200` (defaults to `run.convergence_grids`).
        #[arg(long, value_delimiter = ',')]
        grids: Vec<usize>,
    },
    /// Run the invariant checks.
    Verify(Common),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let common = match &cli.command {
        Command::Simulate(c) | Command::Compare(c) | Command::Verify(c) => c,
        Command::Synthesize { common, .. } | Command::Convergence { common, .. } => common,
    };
    let name = common.config.display().to_string();
    let text = fs::read_to_string(&common.config).map_err(|e| CliError::Io(format!("{name}: {e}")))?;
    let src = Source::new(&name, &text);
    let cfg = config::parse(&src)?;
    let settings = Settings {
        checkpoint: common.checkpoint.unwrap_or(cfg.run.checkpoint),
        blowup_bound: cfg.run.blowup_bound,
        tolerances: cfg.run.tolerances.clone(),
    };
    let out = &common.out;
    match &cli.command {
        Command::Convergence { grids, .. } => {
            let grids = if grids.is_empty() { cfg.run.convergence_grids.clone() } else { grids.clone() };
            commands::run_convergence(&cfg, &src, &grids, &settings, out)
        }
        command => {
            let inst = cfg.instance(&src, common.n)?;
            match command {
                Command::Simulate(_) => commands::run_simulate(&inst, out),
                Command::Synthesize { route, .. } => {
                    let route = match (route, &cfg.run.route) {
                        (Some(r), _) => *r,
                        (None, Some(r)) => Route::parse(r)?,
                        (None, None) => return Err(CliError::Input("no route given: pass --route or set run.route".into())),
                    };
                    commands::run_synthesize(&inst, route, &settings, out)
                }
                Command::Compare(_) => commands::run_compare(&inst, &settings, out),
                Command::Verify(_) => {
                    if commands::run_verify(&inst, &settings, out)? {
                        Ok(())
                    } else {
                        Err(CliError::Numerical(format!("some checks failed; see {}", out.join("verify.txt").display())))
                    }
                }
                Command::Convergence { .. } => unreachable!(),
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
