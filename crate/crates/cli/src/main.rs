//! Batch driver: `asymdiv run|sweep|validate <config.json>`.
//!
//! Exit status is 0 on success, 2 for invalid input or unwritable output and
//! 3 when a numerical method fails or a cross-validation check disagrees.

mod config;
mod modes;
mod output;
mod sweep;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;
use output::{Manifest, OutputDir};
use sweep::Axis;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("output error: {0}")]
    Output(String),
    #[error("cross-validation failed: {0}")]
    Disagreement(String),
    #[error(transparent)]
    Core(#[from] asymdiv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use asymdiv::Error as E;
        match self {
            CliError::Config(_) | CliError::Output(_) => 2,
            CliError::Disagreement(_) => 3,
            CliError::Core(e) => match e {
                E::Domain(_) | E::Parameter(_) | E::Io(_) => 2,
                E::Iteration { .. }
                | E::EstimationFailed(_)
                | E::InvalidEigendata(_)
                | E::PopulationCap { .. }
                | E::EmptyPopulation(_) => 3,
            },
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "asymdiv", version, about = "Growth rate of an asymmetrically dividing population")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug); RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Overrides the config's output_dir.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Solve over a list of values of one parameter.
    Sweep {
        config: PathBuf,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated values, e.g. `-0.2,-0.1,0,0.1,0.2`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        values: Vec<f64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Parse and check a config file without running it.
    Validate { config: PathBuf },
}

fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
    let cfg = ExperimentConfig::load(path)?;
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Validate { config } => {
            let cfg = load(&config)?;
            println!("{}: valid {} config", config.display(), cfg.mode.as_str());
            Ok(())
        }
        Command::Run { config, output_dir } => {
            let cfg = load(&config)?;
            let dir = cfg.resolve_output_dir(output_dir.as_deref());
            let mut out = OutputDir::create(&dir)?;
            let mut man = Manifest::new(&format!("run {}", cfg.mode.as_str()), &cfg);
            let res = modes::run(&cfg, &mut out, &mut man);
            finish(res, &mut out, &mut man)
        }
        Command::Sweep { config, axis, values, output_dir } => {
            let cfg = load(&config)?;
            let dir = cfg.resolve_output_dir(output_dir.as_deref());
            let mut out = OutputDir::create(&dir)?;
            let mut man = Manifest::new("sweep", &serde_json::json!({ "config": cfg, "axis": axis, "values": values }));
            let res = sweep::sweep(&cfg, axis, &values, &mut out, &mut man);
            finish(res, &mut out, &mut man)
        }
    }
}

/// Writes the manifest whether or not the run succeeded, so partial outputs
/// stay accounted for.
fn finish(res: Result<(), CliError>, out: &mut OutputDir, man: &mut Manifest) -> Result<(), CliError> {
    if let Err(e) = &res {
        man.warn(format!("run failed: {e}"));
    }
    man.finish(out)?;
    if res.is_ok() {
        log::info!("wrote {} files to {}", out.files().len() + 1, out.root().display());
    }
    res
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
