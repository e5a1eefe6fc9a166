//! Command-line front end: preprocessing, training, hyperparameter search,
//! ensemble prediction, evaluation and report data.

pub mod commands;
pub mod config;
pub mod store;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use sleepnet_core::ErrorKind;

pub use config::{ConfigError, DataError, PipelineConfig, Split};

#[derive(Debug, Parser)]
#[command(name = "sleepnet", version, about = "Sleep-stage classification from polysomnography")]
pub struct Cli {
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

/// Configuration sources shared by the pipeline commands.
#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Experiment configuration (TOML).
    #[arg(short, long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Override one key, e.g. `--set train.max_epochs=3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    pub fn load(&self) -> Result<PipelineConfig, ConfigError> {
        PipelineConfig::load(self.config.as_deref(), &self.overrides)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter and resample raw records; compute normalization statistics.
    Preprocess(ConfigArgs),
    /// Train one network and write its best checkpoint and history.
    Train(ConfigArgs),
    /// Search hyperparameters with a tree-structured Parzen estimator.
    Hpo {
        #[command(flatten)]
        config: ConfigArgs,
        /// Continue from the existing trial log instead of starting over.
        #[arg(long)]
        resume: bool,
    },
    /// Write ensemble hypnograms for the records of a split.
    Predict {
        #[command(flatten)]
        config: ConfigArgs,
        /// Restrict to these record ids.
        #[arg(long, value_delimiter = ',')]
        records: Vec<String>,
    },
    /// Score hypnograms against the annotations.
    Evaluate(ConfigArgs),
    /// Print the evaluation table and emit plot data.
    Report {
        #[command(flatten)]
        config: ConfigArgs,
        /// Write the search's pairwise hyperparameter/kappa data.
        #[arg(long)]
        scatter: bool,
    },
    /// Print the resolved configuration.
    Config(ConfigArgs),
    /// Generate synthetic raw records for demonstrations and tests.
    Synth(commands::synth::SynthArgs),
}

/// Exit status for an error: 1 configuration, 2 data, 3 numerical.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 1;
        }
        if cause.downcast_ref::<DataError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<sleepnet_core::Error>() {
            return match e.kind() {
                ErrorKind::Config => 1,
                ErrorKind::Data => 2,
                ErrorKind::Numerical => 3,
            };
        }
    }
    2
}

fn command() -> clap::Command {
    let reference = config::reference();
    let mut cmd = Cli::command();
    for name in ["preprocess", "train", "hpo", "predict", "evaluate", "report", "config"] {
        let text = reference.clone();
        cmd = cmd.mut_subcommand(name, |c| c.after_long_help(text));
    }
    cmd
}

pub fn execute(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Preprocess(c) => commands::preprocess::run(&c.load()?),
        Command::Train(c) => commands::train::run(&c.load()?),
        Command::Hpo { config, resume } => commands::hpo::run(&config.load()?, resume),
        Command::Predict { config, records } => commands::predict::run(&config.load()?, &records),
        Command::Evaluate(c) => commands::evaluate::run(&c.load()?),
        Command::Report { config, scatter } => commands::report::run(&config.load()?, scatter),
        Command::Config(c) => {
            print!("{}", c.load()?.to_toml());
            Ok(())
        }
        Command::Synth(args) => commands::synth::run(&args),
    }
}

/// Parses `args`, runs the command and maps the outcome to an exit status.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match command().try_get_matches_from(args).and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
