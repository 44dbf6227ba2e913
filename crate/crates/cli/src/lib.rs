//! Command-line front end: CSV loading, run configuration and report files.

pub mod config;
pub mod load;
pub mod report;
pub mod run;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::{AnalysisArgs, DiffArgs, FileConfig, GenerateArgs, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_NONCONVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "synthctl", version, about = "Synthetic control estimation and placebo inference")]
pub struct Cli {
    /// TOML file with the same keys as the flags; flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the synthetic control; writes weights, gaps and metadata.
    Estimate(AnalysisArgs),
    /// Estimate plus in-space placebos for every unit.
    Placebo(AnalysisArgs),
    /// Estimate plus leave-one-donor-out re-estimates.
    Loo(AnalysisArgs),
    /// Estimate plus placebo p-values across the 14 lag specifications.
    Specsearch(AnalysisArgs),
    /// Difference in effects between two panels, with placebos.
    Diff(DiffArgs),
    /// Write a seeded factor-model panel with known ground truth.
    Generate(GenerateArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Estimate(_) => "estimate",
            Command::Placebo(_) => "placebo",
            Command::Loo(_) => "loo",
            Command::Specsearch(_) => "specsearch",
            Command::Diff(_) => "diff",
            Command::Generate(_) => "generate",
        }
    }
}

fn execute(cli: Cli) -> anyhow::Result<run::Outcome> {
    let file = match &cli.config {
        Some(p) => FileConfig::read(p)?,
        None => FileConfig::default(),
    };
    let name = cli.command.name();
    let cfg = match cli.command {
        Command::Generate(args) => {
            let (spec, dir) = config::resolve_generator(args, file)?;
            return run::run_generate(&spec, &dir);
        }
        Command::Diff(args) => RunConfig::resolve_diff(args, file)?,
        Command::Estimate(args) => RunConfig::resolve(args, file)?,
        Command::Placebo(mut args) => {
            args.placebo = true;
            RunConfig::resolve(args, file)?
        }
        Command::Loo(mut args) => {
            args.loo = true;
            RunConfig::resolve(args, file)?
        }
        Command::Specsearch(mut args) => {
            args.specsearch = true;
            RunConfig::resolve(args, file)?
        }
    };
    run::run_analysis(&cfg, name)
}

/// Parses `args`, runs, prints the console summary and returns the exit code.
pub fn main_with<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_FAILURE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            if outcome.nonconverged {
                EXIT_NONCONVERGED
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_FAILURE
        }
    }
}
