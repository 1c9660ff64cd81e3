use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::budget::paper_like_noise;
use crate::bell::{BellOptions, SpamModel};
use crate::dynamics::{EvolveOptions, NoiseConfig, StepControl};
use crate::error::{Error, Result};
use crate::imaging::{
    bell_imaging, calibrate_imaging, manybody_imaging, ImageSequence, ImagingModel, PreparationModel, ReadoutModel,
    ShotModels,
};
use crate::lattice::{spacing_for_interaction, BasisKind, LatticeSpec, PulseSchedule, RabiProfile, DetuningProfile, DEFAULT_C6_OVER_2PI, DEFAULT_TANGENT_SHAPE};

/// Chain length cap applied by `desk_scale`.
pub const DESK_MAX_ATOMS: usize = 16;
/// Trajectory and per-batch shot cap applied by `desk_scale`.
pub const DESK_MAX_TRAJECTORIES: u64 = 2000;

fn default_c6() -> f64 {
    DEFAULT_C6_OVER_2PI
}

fn default_basis() -> BasisKind {
    BasisKind::Blockaded
}

/// Geometry given either as a spacing or as a nearest-neighbour interaction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub n_atoms: usize,
    /// Lattice constant (um).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
    /// Nearest-neighbour `V/2pi` (MHz).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interaction_mhz: Option<f64>,
    #[serde(default = "default_c6")]
    pub c6_over_2pi: f64,
    #[serde(default)]
    pub interaction_range: usize,
    #[serde(default = "default_basis")]
    pub basis: BasisKind,
}

impl LatticeConfig {
    pub fn resolve(&self) -> Result<LatticeSpec> {
        let spacing = match (self.spacing, self.interaction_mhz) {
            (Some(a), None) => a,
            (None, Some(v)) => spacing_for_interaction(v, self.c6_over_2pi)?,
            _ => return Err(Error::Config("lattice needs exactly one of spacing and interaction_mhz".into())),
        };
        let spec = LatticeSpec {
            n_atoms: self.n_atoms,
            spacing,
            c6_over_2pi: self.c6_over_2pi,
            interaction_range: self.interaction_range,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorKind {
    Dopri5,
    Magnus,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub method: IntegratorKind,
    pub tolerance: f64,
    /// Fixed step of the Magnus scheme (us).
    pub max_step: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { method: IntegratorKind::Dopri5, tolerance: StepControl::default().tolerance, max_step: 0.01 }
    }
}

impl IntegratorConfig {
    pub fn options(&self) -> Result<EvolveOptions> {
        let mut o = match self.method {
            IntegratorKind::Dopri5 => EvolveOptions::default(),
            IntegratorKind::Magnus => EvolveOptions::magnus(self.max_step),
        };
        o.step.tolerance = self.tolerance;
        o.validate()?;
        Ok(o)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseProfile {
    Noiseless,
    DecayOnly,
    PaperLike,
    /// Use the `custom` table.
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub profile: NoiseProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<NoiseConfig>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { profile: NoiseProfile::Noiseless, custom: None }
    }
}

impl NoiseSection {
    pub fn resolve(&self) -> Result<NoiseConfig> {
        let c = match (self.profile, &self.custom) {
            (NoiseProfile::Custom, Some(c)) => c.clone(),
            (NoiseProfile::Custom, None) => return Err(Error::Config("noise profile custom needs a [noise.custom] table".into())),
            (_, Some(_)) => return Err(Error::Config("[noise.custom] is only read with profile = \"custom\"".into())),
            (NoiseProfile::Noiseless, None) => NoiseConfig::noiseless(),
            (NoiseProfile::DecayOnly, None) => NoiseConfig::decay_only(),
            (NoiseProfile::PaperLike, None) => paper_like_noise(),
        };
        c.validate()?;
        Ok(c)
    }
}

/// Camera model: an operating point or explicit Poisson means.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ImagingSpec {
    Manybody,
    Bell,
    Perfect,
    Calibrated { fp_fidelity: f64, fn_fidelity: f64, threshold: u32 },
    Explicit { lambda_atom: f64, lambda_bg: f64, threshold: u32 },
}

impl ImagingSpec {
    pub fn model(&self) -> Result<ImagingModel> {
        match *self {
            ImagingSpec::Manybody => Ok(manybody_imaging()),
            ImagingSpec::Bell => Ok(bell_imaging()),
            ImagingSpec::Perfect => Ok(ImagingModel::perfect()),
            ImagingSpec::Calibrated { fp_fidelity, fn_fidelity, threshold } => {
                calibrate_imaging(fp_fidelity, fn_fidelity, threshold)
            }
            ImagingSpec::Explicit { lambda_atom, lambda_bg, threshold } => ImagingModel::new(lambda_atom, lambda_bg, threshold),
        }
    }
}

/// Imaging chain. A missing erasure camera defaults to the operating point
/// of the campaign (many-body for sweeps, two-atom for Bell runs).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImagingConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub erasure: Option<ImagingSpec>,
    #[serde(default = "perfect_spec")]
    pub final_image: ImagingSpec,
    #[serde(default)]
    pub readout: ReadoutModel,
    #[serde(default)]
    pub keep_counts: bool,
    #[serde(default)]
    pub keep_truth: bool,
}

fn perfect_spec() -> ImagingSpec {
    ImagingSpec::Perfect
}

impl Default for ImagingConfig {
    fn default() -> Self {
        Self { erasure: None, final_image: ImagingSpec::Perfect, readout: ReadoutModel::default(), keep_counts: false, keep_truth: false }
    }
}

impl ImagingConfig {
    pub fn models(&self, sequence: ImageSequence) -> Result<ShotModels> {
        let fallback = match sequence {
            ImageSequence::Sweep => ImagingSpec::Manybody,
            ImageSequence::Bell => ImagingSpec::Bell,
        };
        let models = ShotModels {
            erasure: self.erasure.unwrap_or(fallback).model()?,
            final_image: self.final_image.model()?,
            readout: self.readout,
            sequence,
            keep_counts: self.keep_counts,
        };
        models.validate()?;
        Ok(models)
    }
}

fn default_points() -> usize {
    9
}
fn default_half_width() -> f64 {
    0.15
}
fn default_shots_per_point() -> u64 {
    1000
}
fn default_budget() -> u64 {
    2000
}

/// Two-atom Rabi campaign around the pi and 2 pi times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BellConfig {
    /// Resonant Rabi frequency (MHz).
    pub omega: f64,
    #[serde(default = "default_points")]
    pub points_per_window: usize,
    /// Window half-width as a fraction of the pi time.
    #[serde(default = "default_half_width")]
    pub window_half_width: f64,
    #[serde(default = "default_shots_per_point")]
    pub shots_per_point: u64,
    /// Branched trajectories for the pair error budget; 0 skips it.
    #[serde(default = "default_budget")]
    pub budget_trajectories: u64,
    #[serde(default)]
    pub estimator: BellOptions,
}

fn default_shape() -> f64 {
    DEFAULT_TANGENT_SHAPE
}
fn default_ramp() -> f64 {
    0.1
}
fn default_true() -> bool {
    true
}

/// Adiabatic sweep with snapshots at `checkpoints`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub omega_max: f64,
    pub delta_max: f64,
    pub duration: f64,
    #[serde(default = "default_shape")]
    pub shape: f64,
    #[serde(default = "default_ramp")]
    pub ramp_fraction: f64,
    /// Snapshot times (us); empty means the end of the sweep only.
    #[serde(default)]
    pub checkpoints: Vec<f64>,
    pub n_shots: u64,
    /// Draw preparation errors from the preparation model.
    #[serde(default = "default_true")]
    pub prep_errors: bool,
    /// Force a preparation error on this site in every shot.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inject_prep_error: Option<usize>,
}

impl SweepConfig {
    pub fn schedule(&self) -> PulseSchedule {
        PulseSchedule {
            duration: self.duration,
            rabi: RabiProfile::Ramped { omega_max: self.omega_max, ramp_fraction: self.ramp_fraction },
            detuning: DetuningProfile::Tangent { delta_max: self.delta_max, shape: self.shape },
        }
    }

    pub fn checkpoint_times(&self) -> Vec<f64> {
        if self.checkpoints.is_empty() {
            vec![self.duration]
        } else {
            self.checkpoints.clone()
        }
    }
}

/// Output naming.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// File name prefix inside the output directory.
    pub prefix: String,
    /// Also write tab-separated shot exports.
    pub text_shots: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { prefix: "run".into(), text_shots: false }
    }
}

/// Complete description of one simulated experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub lattice: LatticeConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub imaging: ImagingConfig,
    #[serde(default)]
    pub preparation: PreparationModel,
    /// Correction model for `fit-bell`; derived from the imaging chain when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spam: Option<SpamModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bell: Option<BellConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(config_err)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Canonical serialization; field order is fixed by the type.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(config_err)
    }

    /// Hex SHA-256 of the canonical TOML.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |r: Result<()>| r.map_err(|e| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        });
        wrap(self.lattice.resolve().map(|_| ()))?;
        wrap(self.integrator.options().map(|_| ()))?;
        wrap(self.noise.resolve().map(|_| ()))?;
        wrap(self.preparation.validate())?;
        if let Some(s) = &self.spam {
            wrap(s.validate())?;
        }
        if let Some(b) = &self.bell {
            wrap(self.imaging.models(ImageSequence::Bell).map(|_| ()))?;
            if self.lattice.n_atoms != 2 {
                return Err(Error::Config("a Bell campaign needs n_atoms = 2".into()));
            }
            if !(b.omega > 0.0 && b.omega.is_finite()) {
                return Err(Error::Config("bell.omega must be positive".into()));
            }
            if b.points_per_window < 3 || b.shots_per_point == 0 {
                return Err(Error::Config("need at least 3 points per window and 1 shot per point".into()));
            }
            if !(b.window_half_width > 0.0 && b.window_half_width < 0.5) {
                return Err(Error::Config("bell.window_half_width must lie in (0, 0.5)".into()));
            }
        }
        if let Some(s) = &self.sweep {
            wrap(self.imaging.models(ImageSequence::Sweep).map(|_| ()))?;
            wrap(s.schedule().validate())?;
            if s.n_shots == 0 {
                return Err(Error::Config("sweep.n_shots must be positive".into()));
            }
            let times = s.checkpoint_times();
            if times.iter().any(|&t| !(0.0..=s.duration).contains(&t)) || times.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Config("sweep checkpoints must increase within [0, duration]".into()));
            }
            if s.inject_prep_error.is_some_and(|i| i >= self.lattice.n_atoms) {
                return Err(Error::Config("inject_prep_error site is off the chain".into()));
            }
        }
        Ok(())
    }

    /// Cap the chain at `DESK_MAX_ATOMS` and every trajectory or shot count
    /// at `DESK_MAX_TRAJECTORIES`.
    pub fn desk_scale(&mut self) {
        self.lattice.n_atoms = self.lattice.n_atoms.min(DESK_MAX_ATOMS);
        if let Some(b) = &mut self.bell {
            b.shots_per_point = b.shots_per_point.min(DESK_MAX_TRAJECTORIES);
            b.budget_trajectories = b.budget_trajectories.min(DESK_MAX_TRAJECTORIES);
        }
        if let Some(s) = &mut self.sweep {
            s.n_shots = s.n_shots.min(DESK_MAX_TRAJECTORIES);
            if let Some(i) = s.inject_prep_error {
                s.inject_prep_error = Some(i.min(self.lattice.n_atoms - 1));
            }
        }
    }

    /// Readout confusion and undetected preparation error implied by the
    /// two-atom imaging chain, unless `spam` is given explicitly.
    pub fn spam_model(&self) -> Result<SpamModel> {
        if let Some(s) = self.spam {
            return Ok(s);
        }
        let m = self.imaging.models(ImageSequence::Bell)?;
        let ro = m.readout;
        let d = m.final_image.detection_probability();
        let fp = m.final_image.false_positive_rate();
        let reads_g = |present: f64| present * d + (1.0 - present) * fp;
        let g_present = ro.survival_per_erasure_image.powi(m.sequence.erasure_images()) * ro.final_detection_fidelity;
        let r_present = (1.0 - ro.autoionization_efficiency) * ro.final_detection_fidelity;
        Ok(SpamModel {
            eps_g: 1.0 - reads_g(g_present),
            eps_r: reads_g(r_present),
            p_prep: self.preparation.p_prep_error * (1.0 - m.erasure.detection_probability()),
        })
    }
}

/// Built-in configurations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    BellPaper,
    BellNoiseless,
    SweepDesk,
    SweepNoiseless,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::BellPaper, Preset::BellNoiseless, Preset::SweepDesk, Preset::SweepNoiseless];

    pub fn name(self) -> &'static str {
        match self {
            Preset::BellPaper => "bell-paper",
            Preset::BellNoiseless => "bell-noiseless",
            Preset::SweepDesk => "sweep-desk",
            Preset::SweepNoiseless => "sweep-noiseless",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn config(self) -> ExperimentConfig {
        let bell = |noise: NoiseProfile| ExperimentConfig {
            name: self.name().into(),
            seed: 1,
            lattice: LatticeConfig {
                n_atoms: 2,
                spacing: None,
                interaction_mhz: Some(6.2 * 140.0),
                c6_over_2pi: DEFAULT_C6_OVER_2PI,
                interaction_range: 0,
                basis: BasisKind::Full,
            },
            integrator: IntegratorConfig { tolerance: 1e-9, ..IntegratorConfig::default() },
            noise: NoiseSection { profile: noise, custom: None },
            imaging: ImagingConfig::default(),
            preparation: PreparationModel::default(),
            spam: None,
            bell: Some(BellConfig {
                omega: 6.2,
                points_per_window: default_points(),
                window_half_width: default_half_width(),
                shots_per_point: default_shots_per_point(),
                budget_trajectories: default_budget(),
                estimator: BellOptions { n_samples: 100_000, ..BellOptions::default() },
            }),
            sweep: None,
            output: OutputConfig { prefix: "bell".into(), text_shots: false },
        };
        let sweep = |noise: NoiseProfile, duration: f64, n_shots: u64, checkpoints: Vec<f64>| ExperimentConfig {
            name: self.name().into(),
            seed: 1,
            lattice: LatticeConfig {
                n_atoms: 12,
                spacing: Some(2.8),
                interaction_mhz: None,
                c6_over_2pi: DEFAULT_C6_OVER_2PI,
                interaction_range: 0,
                basis: BasisKind::Blockaded,
            },
            integrator: IntegratorConfig { method: IntegratorKind::Magnus, max_step: 0.01, ..IntegratorConfig::default() },
            noise: NoiseSection { profile: noise, custom: None },
            imaging: ImagingConfig::default(),
            preparation: PreparationModel::default(),
            spam: None,
            bell: None,
            sweep: Some(SweepConfig {
                omega_max: 5.6,
                delta_max: 30.0,
                duration,
                shape: DEFAULT_TANGENT_SHAPE,
                ramp_fraction: default_ramp(),
                checkpoints,
                n_shots,
                prep_errors: noise != NoiseProfile::Noiseless,
                inject_prep_error: None,
            }),
            output: OutputConfig { prefix: "sweep".into(), text_shots: false },
        };
        match self {
            Preset::BellPaper => bell(NoiseProfile::PaperLike),
            Preset::BellNoiseless => bell(NoiseProfile::Noiseless),
            Preset::SweepDesk => sweep(NoiseProfile::PaperLike, 3.0, 2000, vec![0.0, 1.0, 1.5, 2.0, 3.0]),
            Preset::SweepNoiseless => {
                let mut c = sweep(NoiseProfile::Noiseless, 8.0, 1000, Vec::new());
                c.imaging = ImagingConfig {
                    erasure: Some(ImagingSpec::Perfect),
                    readout: ReadoutModel::perfect(),
                    ..ImagingConfig::default()
                };
                c
            }
        }
    }
}
