//! Command-line front end: reads quote files and a run configuration, writes
//! plot-ready CSVs.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gpcurve::Error;

use crate::config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// Short machine-readable error class printed with every failure.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Core(e) => match e {
                Error::Parse(_) => "parse",
                Error::Infeasible | Error::InfeasibleFold { .. } => "infeasible",
                Error::RankDeficient { .. } => "rank-deficient",
                Error::InvalidQuote(_)
                | Error::InvalidGrid(_)
                | Error::InvalidKernel(_)
                | Error::OutOfDomain(_)
                | Error::MissingCurvePoint(_)
                | Error::MissingDiscount(_)
                | Error::InconsistentGrid(_)
                | Error::EmptyInput(_) => "input",
                _ => "numeric",
            },
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind() {
            "infeasible" => 3,
            "rank-deficient" | "numeric" => 4,
            _ => 2,
        }
    }
}

#[derive(Parser)]
#[command(name = "gpcurve", version, about = "Monotone term-structure curves from market quotes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Most likely curve, sampled paths, confidence bands and derived rates.
    Build(Flags),
    /// Sampled curve paths on the evaluation grid.
    Sample(Flags),
    /// Length scale and variance by leave-one-out cross-validation.
    Estimate(Flags),
    /// Most likely surface across several quotation dates.
    Surface(Flags),
    /// Constrained mode against the kriging mean and parametric fits.
    Compare(Flags),
}

/// Flags override the matching configuration keys.
#[derive(clap::Args)]
struct Flags {
    /// TOML file with shared keys and one section per command.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    quotes: Option<String>,
    #[arg(long)]
    discount: Option<String>,
    /// CSV listing `file,t` for each quotation date.
    #[arg(long)]
    panel: Option<String>,
    #[arg(short, long)]
    output: Option<String>,
    #[arg(long)]
    kernel: Option<String>,
    /// Number, `[x, t]` pair, or `estimate`.
    #[arg(long)]
    theta: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    level: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Any other configuration key.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Flags {
    fn overrides(&self) -> Result<Vec<(String, String)>, CliError> {
        let mut out = Vec::new();
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        let named = [
            ("quotes", &self.quotes),
            ("discount", &self.discount),
            ("panel", &self.panel),
            ("output", &self.output),
            ("kernel", &self.kernel),
            ("theta", &self.theta),
            ("n", &self.n),
            ("samples", &self.samples),
            ("level", &self.level),
            ("seed", &self.seed),
        ];
        out.extend(named.into_iter().filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone()))));
        Ok(out)
    }
}

fn run(cli: Cli) -> Result<String, CliError> {
    let (section, flags, cmd): (&str, &Flags, fn(&RunConfig) -> Result<String, CliError>) = match &cli.command {
        Command::Build(f) => ("build", f, commands::build),
        Command::Sample(f) => ("sample", f, commands::sample),
        Command::Estimate(f) => ("estimate", f, commands::estimate),
        Command::Surface(f) => ("surface", f, commands::surface),
        Command::Compare(f) => ("compare", f, commands::compare),
    };
    let cfg = RunConfig::load(flags.config.as_deref(), section, &flags.overrides()?)?;
    cmd(&cfg)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            ExitCode::from(e.exit_code())
        }
    }
}
