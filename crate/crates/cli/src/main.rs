//! `fragstat`: stationary size distributions for fragmentation with size diffusion.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fragstat_core::FragError;

use crate::config::InputError;

#[derive(Parser, Debug)]
#[command(name = "fragstat", version, about = "Stationary solutions of the fragmentation equation with size diffusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Coefficient spec file (key = value lines)
    #[arg(long)]
    spec: PathBuf,
    /// Output directory; reports go to stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a spec field, e.g. --set rate.gamma=2
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug, Clone)]
pub struct SolveFlags {
    /// Number of grid nodes
    #[arg(long)]
    n: Option<usize>,
    /// Truncation point of the grid
    #[arg(long)]
    xmax: Option<f64>,
    /// nullspace or conservative
    #[arg(long)]
    formulation: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct Source {
    #[command(flatten)]
    solve: SolveFlags,
    /// Profile CSV written by `solve`; solved afresh when omitted
    #[arg(long)]
    profile: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tabulate the explicit solution for power-law coefficients
    ClosedForm {
        #[command(flatten)]
        common: Common,
        /// Number of sample points
        #[arg(long, default_value_t = 512)]
        points: usize,
        /// Smallest sampled size
        #[arg(long, default_value_t = 1e-4)]
        lo: f64,
        /// Largest sampled size; defaults to where the solution drops below 1e-16
        #[arg(long)]
        hi: Option<f64>,
    },
    /// Compute the normalized stationary distribution
    Solve {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        solve: SolveFlags,
    },
    /// Residuals, identities and shape checks on a distribution
    Verify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: Source,
    },
    /// Fit the large-size tail and check its envelope
    Tailfit {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: Source,
        /// Fit window lo,hi
        #[arg(long)]
        window: Option<String>,
        /// Exponent of the upper envelope
        #[arg(long)]
        mu: Option<f64>,
    },
    /// Fit the small-size law and compare with the predicted regime
    Smallfit {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: Source,
        /// Fit window lo,hi
        #[arg(long)]
        window: Option<String>,
    },
    /// Moments with convergence verdicts
    Moments {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: Source,
        /// Comma-separated orders
        #[arg(long, default_value = "-1,0,1,2", allow_hyphen_values = true)]
        orders: String,
    },
    /// Mass-transfer deficiency of the daughter distribution
    Delta {
        #[command(flatten)]
        common: Common,
        /// Moment order m > 1
        #[arg(long, allow_hyphen_values = true)]
        m: f64,
    },
    /// Check the structural assumptions on the coefficients
    Assumptions {
        #[command(flatten)]
        common: Common,
    },
}

fn exit_status(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<InputError>().is_some() {
        return 2;
    }
    if let Some(fe) = e.downcast_ref::<FragError>() {
        return if fe.is_input_error() { 2 } else { 3 };
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FRAGSTAT_LOG", "error")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::ClosedForm { common, points, lo, hi } => commands::closed_form(&common, points, lo, hi),
        Command::Solve { common, solve } => commands::solve(&common, &solve),
        Command::Verify { common, source } => commands::verify(&common, &source),
        Command::Tailfit { common, source, window, mu } => commands::tailfit(&common, &source, window.as_deref(), mu),
        Command::Smallfit { common, source, window } => commands::smallfit(&common, &source, window.as_deref()),
        Command::Moments { common, source, orders } => commands::moments(&common, &source, &orders),
        Command::Delta { common, m } => commands::delta(&common, m),
        Command::Assumptions { common } => commands::assumptions(&common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_status(&e))
        }
    }
}
