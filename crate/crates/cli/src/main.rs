//! `seqcode`: rates, sweeps, simulations and self-checks for delayed
//! sequential coding.
//!
//! Exit codes: 0 ok, 1 verification failure, 2 configuration error,
//! 3 infeasible or out-of-region request.

mod commands;
mod config;
mod verify;

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use config::Config;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] seqcode::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("{0} check(s) failed")]
    Verification(usize),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Verification(_) => 1,
            CliError::Core(seqcode::Error::OutOfRegion(_) | seqcode::Error::Infeasible(_)) => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Text,
}

/// Data sink: the `--out` file or standard output.
pub struct Output(Box<dyn Write>);

impl Output {
    fn open(path: Option<&PathBuf>) -> Result<Self, CliError> {
        Ok(Self(match path {
            Some(p) => Box::new(File::create(p)?),
            None => Box::new(io::stdout().lock()),
        }))
    }

    pub fn write(&mut self, s: &str) -> Result<(), CliError> {
        self.0.write_all(s.as_bytes())?;
        self.0.flush()?;
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(name = "seqcode", version, about = "Sum-rate analysis for delayed sequential coding")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write data here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Comma-separated system kinds, e.g. `CC,CNC1,JC`.
    #[arg(long, global = true)]
    kinds: Option<String>,
    /// Verification check to run; repeatable.
    #[arg(long, global = true)]
    check: Vec<String>,
    /// Log progress to standard error.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sum-rates per system kind: closed form where valid, solver otherwise.
    Rates,
    /// Rates over a distortion grid, one CSV row per point.
    Sweep,
    /// Monte Carlo simulation of DPCM or the joint test channel.
    Simulate,
    /// Pass/fail table of built-in checks.
    Verify,
}

fn load(cli: &Cli, required: bool) -> Result<Config, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None if required => return Err(CliError::Config("--config is required for this command".into())),
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.solver.seed = seed;
        cfg.verify.seed = seed;
        if let Some(sim) = cfg.sim.as_mut() {
            sim.seed = seed;
        }
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let kinds = cli.kinds.as_deref();
    match cli.command {
        Command::Rates => {
            let cfg = load(cli, true)?;
            commands::cmd_rates(&cfg, kinds, cli.format.unwrap_or(Format::Text), &mut Output::open(cli.out.as_ref())?, cli.verbose)
        }
        Command::Sweep => {
            let cfg = load(cli, true)?;
            commands::cmd_sweep(&cfg, kinds, cli.format.unwrap_or(Format::Csv), &mut Output::open(cli.out.as_ref())?, cli.verbose)
        }
        Command::Simulate => {
            let cfg = load(cli, true)?;
            commands::cmd_simulate(&cfg, cli.seed, cli.format.unwrap_or(Format::Text), &mut Output::open(cli.out.as_ref())?)
        }
        Command::Verify => {
            let cfg = load(cli, false)?;
            let selected = if cli.check.is_empty() { cfg.verify.checks.clone() } else { cli.check.clone() };
            let outcomes = verify::run(&cfg, &selected, cfg.verify.seed)?;
            let width = outcomes.iter().map(|o| o.name.len()).max().unwrap_or(0);
            let mut text = String::new();
            for o in &outcomes {
                let status = if o.pass { "PASS" } else { "FAIL" };
                text.push_str(&format!("{status}  {:<width$}  {}\n", o.name, o.detail));
            }
            Output::open(cli.out.as_ref())?.write(&text)?;
            match outcomes.iter().filter(|o| !o.pass).count() {
                0 => Ok(()),
                n => Err(CliError::Verification(n)),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("seqcode: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
