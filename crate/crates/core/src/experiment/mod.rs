//! End-to-end campaigns driven by a TOML experiment description.

mod bell;
mod budget;
mod config;
mod sweep;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use bell::{bell_times, run_bell_campaign, BellCampaign, BellTimes};
pub use budget::{error_budget, pair_estimate, paper_like_noise, ChannelInfidelity, ErrorBudget, NoiseChannel, PairEstimate, PairSetup};
pub use config::{
    BellConfig, ExperimentConfig, ImagingConfig, ImagingSpec, IntegratorConfig, IntegratorKind, LatticeConfig, NoiseProfile,
    NoiseSection, OutputConfig, Preset, SweepConfig, DESK_MAX_ATOMS, DESK_MAX_TRAJECTORIES,
};
pub use sweep::{run_sweep_campaign, SweepCampaign};

pub const TOOL_NAME: &str = "erasim";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Replay information embedded in every output file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    /// Canonical TOML of the resolved configuration.
    pub config: String,
}

impl Provenance {
    pub fn new(command: &str, config: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            tool: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
            command: command.into(),
            config_hash: config.hash()?,
            seed: config.seed,
            config: config.to_toml()?,
        })
    }

    /// `# key: value` lines for CSV headers, without the embedded config.
    pub fn comment_lines(&self) -> String {
        format!(
            "# tool: {} {}\n# command: {}\n# config_hash: {}\n# seed: {}\n",
            self.tool, self.version, self.command, self.config_hash, self.seed
        )
    }
}
