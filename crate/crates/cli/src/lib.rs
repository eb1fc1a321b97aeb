//! Command-line front end: scenario loading, planning, simulation,
//! calibration, verification and report files.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use ballastplan::energy_model::EnergyModel;
use ballastplan::Error;
use clap::{Parser, Subcommand};

pub mod commands;
pub mod scenario;

/// Tank budget, in full-payload fills, when neither flag nor scenario sets one.
pub const DEFAULT_TANK_C: f64 = 50.0;

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "ballastplan", version, about = "Buoyancy planning and mission simulation for ballast-assisted block construction")]
pub struct Cli {
    /// Scenario JSON file.
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    /// Energy model JSON file; defaults to the built-in calibrated model.
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Tank budget in full-payload fills.
    #[arg(long = "tank-c", global = true)]
    pub tank_c: Option<f64>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory for output files.
    #[arg(long, global = true, default_value = "ballastplan-out")]
    pub out: PathBuf,
    /// Fail when results fall outside their reference bands.
    #[arg(long, global = true)]
    pub check: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for the buoyancy allocation of a scenario.
    Plan,
    /// Simulate a scenario and report energy, time and air use.
    Simulate,
    /// Battery recharges for rows of blocks, with and without ballast.
    Table1 {
        /// Extra row lengths, comma separated.
        #[arg(long, value_delimiter = ',')]
        rows: Vec<usize>,
    },
    /// Compare the solver against exhaustive grid search.
    Verify {
        /// Verify a random instance with this many legs instead of a scenario.
        #[arg(long)]
        random_legs: Option<usize>,
        #[arg(long, default_value_t = 21)]
        resolution: usize,
    },
    /// Fit the energy model and the tolerance error scale.
    Calibrate {
        #[arg(long, default_value_t = 0.9225)]
        target_rate: f64,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        /// Stage chain JSON file.
        #[arg(long)]
        chain: Option<PathBuf>,
    },
    /// Acceptance verdicts and manipulation success against error scale.
    Tolerance {
        /// Stage chain JSON file.
        #[arg(long)]
        chain: Option<PathBuf>,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long, default_value_t = 0.1)]
        sigma_max: f64,
        #[arg(long, default_value_t = 20)]
        steps: usize,
        #[arg(long, allow_hyphen_values = true)]
        dx: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        dy: Option<f64>,
    },
}

/// Settings shared by every command.
#[derive(Debug, Clone)]
pub struct Context {
    pub scenario: Option<PathBuf>,
    pub model: EnergyModel,
    pub tank_c: Option<f64>,
    pub seed: u64,
    pub out: PathBuf,
    pub check: bool,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError { code: EXIT_CONFIG, message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError { code: EXIT_FAILURE, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Json(_) | Error::Size(_) => EXIT_CONFIG,
            _ => EXIT_FAILURE,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::runtime(format!("i/o error: {e}"))
    }
}

/// Reads a model file, either a bare model or the `model` entry of a
/// calibration output.
pub fn load_model(path: &Path) -> CliResult<EnergyModel> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let inner = value.get("model").cloned().unwrap_or(value);
    serde_json::from_value(inner).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

impl Context {
    pub fn from_cli(cli: &Cli) -> CliResult<Self> {
        let model = match &cli.model {
            Some(p) => load_model(p)?,
            None => EnergyModel::default(),
        };
        if let Some(c) = cli.tank_c {
            if !(c > 0.0 && c.is_finite()) {
                return Err(CliError::config(format!("--tank-c must be positive, got {c}")));
            }
        }
        Ok(Context {
            scenario: cli.scenario.clone(),
            model,
            tank_c: cli.tank_c,
            seed: cli.seed,
            out: cli.out.clone(),
            check: cli.check,
        })
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> CliResult<()> {
    let ctx = Context::from_cli(cli)?;
    commands::dispatch(&ctx, &cli.command, out)
}

/// Sizes the global thread pool from `BALLASTPLAN_THREADS` when it is set.
pub fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("BALLASTPLAN_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::config(format!("BALLASTPLAN_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::runtime(format!("cannot size thread pool: {e}")))
}
