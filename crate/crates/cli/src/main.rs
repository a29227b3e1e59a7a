mod commands;
mod output;
mod scenario;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cournot_core::ModelError;

use crate::commands::{
    CurvesArgs, FollowerReactionArgs, LeaderReactionArgs, ScenarioArgs, SpotArgs, VerifyArgs,
};
use crate::output::Format;
use crate::sweep::SweepArgs;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("writing csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("writing json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Model(
                ModelError::NotConverged { .. } | ModelError::SolverDisagreement { .. },
            ) => 1,
            CliError::Model(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Equilibria of a two-stage Cournot market with forward contracts and
/// capacity-constrained followers.
#[derive(Parser, Debug)]
#[command(name = "cournot", version)]
struct Cli {
    /// Output encoding.
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    format: Format,
    /// Write to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Spot-stage follower productions for given forward positions and leader productions.
    Spot(SpotArgs),
    /// Symmetric follower reaction F(x).
    FollowerReaction(FollowerReactionArgs),
    /// Symmetric leader reaction X(f).
    LeaderReaction(LeaderReactionArgs),
    /// Symmetric forward-market equilibria.
    Equilibria(ScenarioArgs),
    /// Equilibria of the market without forward contracts.
    Stackelberg(ScenarioArgs),
    /// Existence and multiplicity regimes with their rate checks.
    Regimes(ScenarioArgs),
    /// Forward market against the Stackelberg market: production and welfare.
    Compare(ScenarioArgs),
    /// Brute-force best-response check of computed (or given) equilibria.
    Verify(VerifyArgs),
    /// Repeat an analysis over a grid of one parameter.
    Sweep(SweepArgs),
    /// Sampled reaction curves F(x) and X(f) for plotting.
    Curves(CurvesArgs),
}

fn run(cli: Cli) -> Result<bool> {
    let tol = scenario::env_tolerance()?;
    let report = match cli.command {
        Command::Spot(a) => commands::spot(&a, tol)?,
        Command::FollowerReaction(a) => commands::follower_reaction(&a, tol)?,
        Command::LeaderReaction(a) => commands::leader_reaction(&a, tol)?,
        Command::Equilibria(a) => commands::equilibria(&a, tol, false)?,
        Command::Stackelberg(a) => commands::equilibria(&a, tol, true)?,
        Command::Regimes(a) => commands::regimes(&a, tol)?,
        Command::Compare(a) => commands::compare(&a, tol)?,
        Command::Verify(a) => commands::verify(&a, tol)?,
        Command::Sweep(a) => sweep::run(&a, tol)?,
        Command::Curves(a) => commands::curves(&a, tol)?,
    };
    report.document.write(cli.format, cli.out.as_deref())?;
    Ok(report.failed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(3),
        Err(CliError::Io { source, .. }) if source.kind() == std::io::ErrorKind::BrokenPipe => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
