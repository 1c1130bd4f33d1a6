//! Subcommands behind the `zsda` binary.
//!
//! Exit status 2 means the configuration could not be used; 1 means the
//! configuration was fine but the work failed.

pub mod commands;
pub mod config;
pub mod output;
pub mod svg;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Run(m) => write!(f, "run failed: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<zsda_core::Error> for CliError {
    fn from(e: zsda_core::Error) -> Self {
        match e {
            zsda_core::Error::Config(m) => CliError::Config(m),
            other => CliError::Run(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "zsda", version, about = "Zero-shot domain adaptation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created when missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Replaces the seed from the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides a config value by dotted path; the value is parsed as JSON
    /// when possible.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset into `<out>/dataset.txt`.
    Gen(Common),
    /// Train one model with the config's targets held out.
    Train(Common),
    /// Leave-one-domain-out evaluation.
    Run(Common),
    /// Repeat the evaluation for several latent dimensions.
    SweepK {
        #[command(flatten)]
        common: Common,
        /// Comma-separated latent dimensions.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
    },
    /// Evaluate with a random share of domains as sources.
    SweepSources {
        #[command(flatten)]
        common: Common,
        /// Comma-separated source fractions in (0, 1).
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Write per-domain latent posteriors of a trained model.
    ExportLatents {
        #[command(flatten)]
        common: Common,
        /// Model file written by `train`.
        #[arg(long)]
        model: PathBuf,
    },
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen(c) => commands::gen(&c),
        Command::Train(c) => commands::train(&c),
        Command::Run(c) => commands::run(&c),
        Command::SweepK { common, values } => commands::sweep_k(&common, &values),
        Command::SweepSources { common, values } => commands::sweep_sources(&common, &values),
        Command::ExportLatents { common, model } => commands::export_latents(&common, &model),
    }
}
