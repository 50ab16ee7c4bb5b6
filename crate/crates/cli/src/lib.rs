//! Command-line driver: `aga <subcommand> [flags]`.
//!
//! Every subcommand resolves a [`RunConfig`] (defaults, then `--config`,
//! then flags), validates it completely, and only then touches any file.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{EvalConfig, GridConfig, Overrides, RunConfig};
pub use error::CliError;
pub use report::Report;

#[derive(Debug, Parser)]
#[command(name = "aga", version, about = "Attribute-guided feature augmentation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    pub trials: Option<usize>,
    #[arg(long = "k-shot", global = true, value_name = "N")]
    pub k_shot: Option<usize>,
    #[arg(long, global = true, value_name = "X")]
    pub lambda: Option<f64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset.
    GenData,
    /// Train and archive one regressor per grid attribute.
    TrainRegressor {
        /// Also compare agnostic and per-class regressors on all classes.
        #[arg(long)]
        per_object: bool,
    },
    /// Train and archive the synthesis bank.
    TrainBank,
    /// Augment a dataset with the bank.
    Synthesize {
        #[arg(long, value_name = "PATH")]
        input: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        output: Option<PathBuf>,
    },
    /// Few-shot trials on the unseen classes.
    EvalOneshot,
    /// Print saved reports.
    Report { paths: Vec<PathBuf> },
}

impl GlobalArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            trials: self.trials,
            k_shot: self.k_shot,
            lambda: self.lambda,
            out: self.out.clone(),
        }
    }

    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut config = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        config.apply(&self.overrides());
        config.validate()?;
        Ok(config)
    }
}

/// Runs a parsed command; text output (for `report`) is returned.
pub fn execute(cli: Cli) -> Result<String, CliError> {
    let config = cli.global.resolve()?;
    if cli.global.jobs == Some(0) {
        return Err(CliError::Validation("--jobs must be >= 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.global.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::GenData => commands::gen_data(&config).map(|_| String::new()),
        Command::TrainRegressor { per_object } => commands::train_regressor(&config, per_object).map(|_| String::new()),
        Command::TrainBank => commands::train_bank_cmd(&config).map(|_| String::new()),
        Command::Synthesize { input, output } => commands::synthesize(&config, input, output).map(|_| String::new()),
        Command::EvalOneshot => commands::eval_oneshot(&config).map(|_| String::new()),
        Command::Report { paths } => commands::report(&config, paths),
    })
}

/// Parses `argv` (including the program name), runs it, prints output or the
/// error, and returns the process exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => CliError::Usage(String::new()).exit_code(),
            };
        }
    };
    match execute(cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("aga: {e}");
            e.exit_code()
        }
    }
}
