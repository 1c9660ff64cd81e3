//! Command-line driver: campaigns, fits and analyses that compose through files.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 numerical
//! failure, 4 empty statistics.

mod commands;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use erasim_core::error::{Error, Result};
use erasim_core::experiment::{ExperimentConfig, Preset};
use erasim_core::imaging::ExcisionPolicy;

pub use commands::run_command;

#[derive(Parser, Debug)]
#[command(name = "erasim", version, about = "Rydberg erasure-conversion simulations and Bell-fidelity fits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Experiment description (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Built-in configuration instead of --config: bell-paper, bell-noiseless,
    /// sweep-desk, sweep-noiseless.
    #[arg(long, global = true, conflicts_with = "config")]
    pub preset: Option<String>,
    /// Override the configured master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Cap chain length at 16 and trajectory or shot counts at 2000.
    #[arg(long, global = true)]
    pub desk_scale: bool,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Two-atom Rabi campaign around the pi and 2 pi times.
    SimulateBell {
        #[command(flatten)]
        common: Common,
    },
    /// Checkpointed adiabatic sweep with erasure imaging.
    SimulateSweep {
        #[command(flatten)]
        common: Common,
    },
    /// Bell-fidelity bound from a population count table.
    FitBell {
        #[command(flatten)]
        common: Common,
        /// Count table written by simulate-bell.
        #[arg(long)]
        counts: PathBuf,
    },
    /// Observable tables from shot files.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Shot files, one per checkpoint.
        #[arg(long, required = true, num_args = 1..)]
        shots: Vec<PathBuf>,
        /// Largest distance in conditional profiles and correlations.
        #[arg(long, default_value_t = 4)]
        max_distance: usize,
    },
    /// P_AFM and retention against the erasure-detection threshold.
    ThresholdScan {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        shots: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9,10")]
        thresholds: Vec<u32>,
        #[arg(long, value_enum, default_value = "prep-and-decay")]
        policy: PolicyArg,
    },
    /// Spectral gap of the followed level along a detuning scan.
    GapScan {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_negative_numbers = true)]
        delta_lo: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        delta_hi: Option<f64>,
        #[arg(long, default_value_t = 121)]
        points: usize,
    },
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyArg {
    None,
    PrepOnly,
    PrepAndDecay,
}

impl From<PolicyArg> for ExcisionPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::None => ExcisionPolicy::None,
            PolicyArg::PrepOnly => ExcisionPolicy::PrepOnly,
            PolicyArg::PrepAndDecay => ExcisionPolicy::PrepAndDecay,
        }
    }
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::SimulateBell { common }
            | Command::SimulateSweep { common }
            | Command::FitBell { common, .. }
            | Command::Analyze { common, .. }
            | Command::ThresholdScan { common, .. }
            | Command::GapScan { common, .. } => common,
        }
    }
}

impl Common {
    /// Configuration after the seed override and desk scaling.
    pub fn resolve_config(&self) -> Result<ExperimentConfig> {
        let mut c = match (&self.config, &self.preset) {
            (Some(p), None) => ExperimentConfig::load(p)?,
            (None, Some(name)) => {
                Preset::from_name(name).ok_or_else(|| Error::Config(format!("unknown preset {name}")))?.config()
            }
            _ => return Err(Error::Config("pass exactly one of --config and --preset".into())),
        };
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if self.desk_scale {
            c.desk_scale();
        }
        c.validate()?;
        Ok(c)
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::Domain(_)
        | Error::Capacity { .. }
        | Error::Calibration(_)
        | Error::Format(_)
        | Error::Io(_) => 2,
        Error::StepUnderflow { .. } | Error::DegenerateFit(_) | Error::Singular(_) => 3,
        Error::EmptyStatistics(_) => 4,
    }
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_command(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
