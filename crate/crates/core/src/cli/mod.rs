//! Command-line front end: `iontrap <subcommand> --config FILE [--out DIR]`.
//!
//! Exit codes: 0 on success, 1 on numerical failure, 2 on configuration or
//! usage errors.

mod commands;
pub mod config;
mod figures;
pub mod output;
pub mod svg;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

pub use config::{parse_config, parse_config_str, OutputFormat, RunConfig};
pub use output::{canonical_json, ARTIFACT_VERSION};

use crate::error::{Error, Result};
use crate::model::FrequencyConvention;

#[derive(Debug, Parser)]
#[command(name = "iontrap", version, about = "Work statistics of a trapped ion under trap-frequency ramps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, value_enum)]
    pub format: Option<FormatArg>,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    pub svg: bool,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub convention: Option<ConventionArg>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Transition probabilities P(n → m).
    Transitions,
    /// Exact work distribution.
    WorkDist,
    /// Exponential work average against the free-energy difference.
    Jarzynski,
    /// Forward/backward fluctuation relation.
    Crooks,
    /// Number-state filter transmission.
    Filter,
    /// Monte Carlo emulation of the measurement protocol.
    Protocol,
    /// Heat distribution under an engineered reservoir.
    Bath,
    /// SVG figures with CSV sidecars.
    ReproduceFigures,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Transitions => "transitions",
            Command::WorkDist => "work-dist",
            Command::Jarzynski => "jarzynski",
            Command::Crooks => "crooks",
            Command::Filter => "filter",
            Command::Protocol => "protocol",
            Command::Bath => "bath",
            Command::ReproduceFigures => "reproduce-figures",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ConventionArg {
    Mhz,
    Mrad,
}

/// Parses arguments, runs the subcommand and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(files) => {
            println!("wrote {} files to {}", files.len(), cli.out.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Loads the config, applies flag overrides and dispatches.
pub fn execute(cli: &Cli) -> Result<Vec<String>> {
    let mut cfg = match (&cli.config, cli.command) {
        (Some(path), _) => parse_config(path)?,
        (None, Command::ReproduceFigures) => figures::default_config(),
        (None, cmd) => return Err(Error::Config(format!("`{}` needs --config FILE", cmd.name()))),
    };
    if let Some(f) = cli.format {
        cfg.output.format = match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
            FormatArg::Both => OutputFormat::Both,
        };
    }
    cfg.output.svg |= cli.svg;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(c) = cli.convention {
        cfg.convention = match c {
            ConventionArg::Mhz => FrequencyConvention::MhzOrdinary,
            ConventionArg::Mrad => FrequencyConvention::MradPerUs,
        };
    }
    cfg.resolve()?;
    dispatch(cli.command, &cfg, &cli.out)
}

/// Runs one subcommand and writes its outputs plus the manifest under `out`.
pub fn dispatch(cmd: Command, cfg: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let mut sink = output::OutputSink::new(out, cmd.name(), cfg)?;
    match cmd {
        Command::Transitions => commands::transitions(cfg, &mut sink)?,
        Command::WorkDist => commands::work_dist(cfg, &mut sink)?,
        Command::Jarzynski => commands::jarzynski(cfg, &mut sink)?,
        Command::Crooks => commands::crooks(cfg, &mut sink)?,
        Command::Filter => commands::filter(cfg, &mut sink)?,
        Command::Protocol => commands::protocol(cfg, &mut sink)?,
        Command::Bath => commands::bath(cfg, &mut sink)?,
        Command::ReproduceFigures => figures::reproduce(cfg, &mut sink)?,
    }
    sink.finish()
}
