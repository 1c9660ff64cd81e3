use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bell::{bell_bound, Populations, GG, GR, RG, RR};
use crate::dynamics::{
    par_map_indexed, sample_shot_noise, EvolveOptions, Leak, NoiseConfig, Psd, QuantumState, TermsCache, TrajectorySystem,
};
use crate::error::{domain, Error, Result};
use crate::lattice::{site_bit, BasisKind, LatticeSpec, PulseSchedule};
use crate::rng::{rng_for, Stream};

/// Noise sources switched on one at a time in an error budget.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseChannel {
    LaserFrequency,
    LaserIntensity,
    DarkDecay,
    BrightDecay,
    Doppler,
    Position,
    Pointing,
}

impl NoiseChannel {
    pub const ALL: [NoiseChannel; 7] = [
        NoiseChannel::LaserFrequency,
        NoiseChannel::LaserIntensity,
        NoiseChannel::DarkDecay,
        NoiseChannel::BrightDecay,
        NoiseChannel::Doppler,
        NoiseChannel::Position,
        NoiseChannel::Pointing,
    ];

    /// `full` with every other source off.
    pub fn isolate(self, full: &NoiseConfig) -> NoiseConfig {
        let mut c = NoiseConfig { beam_waist: full.beam_waist, trace_dt: full.trace_dt, ..NoiseConfig::noiseless() };
        match self {
            NoiseChannel::LaserFrequency => c.laser_frequency_psd = full.laser_frequency_psd.clone(),
            NoiseChannel::LaserIntensity => {
                c.laser_intensity_psd = full.laser_intensity_psd.clone();
                c.intensity_rel_sigma = full.intensity_rel_sigma;
            }
            NoiseChannel::DarkDecay => c.dark_lifetime = full.dark_lifetime,
            NoiseChannel::BrightDecay => {
                c.bright_lifetime = full.bright_lifetime;
                c.photoionization_coeff = full.photoionization_coeff;
            }
            NoiseChannel::Doppler => c.doppler_sigma = full.doppler_sigma,
            NoiseChannel::Position => c.position_sigma = full.position_sigma,
            NoiseChannel::Pointing => c.pointing_sigma = full.pointing_sigma,
        }
        c
    }

    pub fn name(self) -> &'static str {
        match self {
            NoiseChannel::LaserFrequency => "laser_frequency",
            NoiseChannel::LaserIntensity => "laser_intensity",
            NoiseChannel::DarkDecay => "dark_decay",
            NoiseChannel::BrightDecay => "bright_decay",
            NoiseChannel::Doppler => "doppler",
            NoiseChannel::Position => "position",
            NoiseChannel::Pointing => "pointing",
        }
    }
}

/// Reference profile with the measured lifetimes and laser noise sized so
/// frequency noise leads, intensity noise follows and dark decay comes third.
/// Only the bright lifetime is a measured value; everything else is a
/// calibration target.
pub fn paper_like_noise() -> NoiseConfig {
    NoiseConfig {
        doppler_sigma: 0.004,
        intensity_rel_sigma: 0.002,
        position_sigma: 0.01,
        pointing_sigma: 0.1,
        laser_frequency_psd: Psd { points: vec![[0.01, 0.032], [0.5, 0.032], [1.0, 3.2e-4]] },
        laser_intensity_psd: Psd::white(5.2e-5, 0.01, 10.0),
        photoionization_coeff: 0.0,
        ..NoiseConfig::decay_only()
    }
}

/// Two-atom drive evaluated at its pi and 2 pi times.
#[derive(Clone, Debug)]
pub struct PairSetup {
    pub lattice: LatticeSpec,
    pub omega: f64,
    pub t_pi: f64,
    pub t_two_pi: f64,
    pub options: EvolveOptions,
}

/// Ensemble estimate on a pair after excising detected bright decays.
///
/// Populations read leaked atoms as `r`, as the final image does.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairEstimate {
    /// `<Psi+|rho|Psi+>` at the pi time.
    pub fidelity: f64,
    pub pi: Populations,
    pub two_pi: Populations,
    /// Population-only lower bound from `pi` and `two_pi`.
    pub bound: f64,
    /// Kept trajectory weight at the pi time.
    pub retention: f64,
    pub n_trajectories: u64,
}

impl PairEstimate {
    pub fn gap(&self) -> f64 {
        self.fidelity - self.bound
    }
}

#[derive(Default, Clone, Copy)]
struct Moments {
    kept: f64,
    overlap: f64,
    pops: [f64; 4],
}

impl Moments {
    fn add(&mut self, o: &Moments) {
        self.kept += o.kept;
        self.overlap += o.overlap;
        for k in 0..4 {
            self.pops[k] += o.pops[k];
        }
    }
}

/// Adds weight `w` of `state` (normalized or not, scaled by `w`).
fn accumulate(m: &mut Moments, state: &QuantumState, w: f64, with_overlap: bool) {
    if state.leaked.contains(&Leak::Bright) {
        return;
    }
    let norm = state.norm_sqr();
    m.kept += w * norm;
    let (a, b) = (site_bit(2, 0), site_bit(2, 1));
    let lost = |site: usize| state.leaked[site] != Leak::None;
    let mut pops = [0.0; 4];
    for (i, &cfg) in state.basis.states().iter().enumerate() {
        let p = state.amplitudes[i].norm_sqr();
        let ra = lost(0) || cfg & a != 0;
        let rb = lost(1) || cfg & b != 0;
        pops[2 * usize::from(ra) + usize::from(rb)] += p;
    }
    for k in 0..4 {
        m.pops[k] += w * pops[k];
    }
    if with_overlap && !state.leaked.iter().any(|l| *l != Leak::None) {
        let amp: Complex64 = (state.amplitude(a) + state.amplitude(b)) * std::f64::consts::FRAC_1_SQRT_2;
        m.overlap += w * amp.norm_sqr();
    }
}

/// Branched-trajectory ensemble on a pair. Each trajectory contributes its
/// no-jump state plus one jump branch weighted by the jump probability, so
/// rare decays enter with full weight at modest trajectory counts.
pub fn pair_estimate(setup: &PairSetup, noise: &NoiseConfig, n_trajectories: u64, seed: u64) -> Result<PairEstimate> {
    if setup.lattice.n_atoms != 2 {
        return domain("pair estimates need a two-atom lattice");
    }
    if n_trajectories == 0 {
        return Err(Error::EmptyStatistics("no trajectories requested".into()));
    }
    noise.validate()?;
    let checkpoints = [setup.t_pi, setup.t_two_pi];
    let schedule = PulseSchedule::resonant(setup.omega, setup.t_two_pi);
    let cache = TermsCache::new(setup.lattice.clone(), BasisKind::Full);
    let rates = noise.rates();
    let per: Vec<Result<[Moments; 2]>> = par_map_indexed(n_trajectories, |index| {
        let shot = sample_shot_noise(noise, &setup.lattice, seed, index, schedule.duration)?;
        let system = TrajectorySystem { cache: &cache, schedule: &schedule, noise: &shot, rates, options: setup.options };
        let mut rng = rng_for(seed, Stream::Trajectory, index);
        let start = QuantumState::ground(BasisKind::Full, 2, 0b11)?;
        let out = system.run_branched(start, &checkpoints, &mut rng)?;
        let mut m = [Moments::default(); 2];
        for k in 0..2 {
            accumulate(&mut m[k], &out.no_jump[k], 1.0, k == 0);
            if let Some(b) = &out.branch[k] {
                let nb = b.norm_sqr();
                accumulate(&mut m[k], b, out.branch_weight / nb, k == 0);
            }
        }
        Ok(m)
    });
    let mut total = [Moments::default(); 2];
    for m in per {
        let m = m?;
        total[0].add(&m[0]);
        total[1].add(&m[1]);
    }
    if !(total[0].kept > 0.0 && total[1].kept > 0.0) {
        return Err(Error::EmptyStatistics("every trajectory was excised".into()));
    }
    let norm = |m: &Moments| m.pops.map(|p| p / m.kept);
    let pi = norm(&total[0]);
    let two_pi = norm(&total[1]);
    let fidelity = total[0].overlap / total[0].kept;
    let renorm = |p: Populations| {
        let s: f64 = p.iter().sum();
        p.map(|x| (x / s).clamp(0.0, 1.0))
    };
    let bound = bell_bound(pi[GR], pi[RG], &renorm(two_pi))?.value;
    debug_assert!((pi[GG] + pi[GR] + pi[RG] + pi[RR] - 1.0).abs() < 1e-9);
    Ok(PairEstimate {
        fidelity,
        pi,
        two_pi,
        bound,
        retention: total[0].kept / n_trajectories as f64,
        n_trajectories,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelInfidelity {
    pub channel: NoiseChannel,
    /// Infidelity above the noiseless reference.
    pub infidelity: f64,
}

/// Per-channel and full-noise pair fidelity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub noiseless: PairEstimate,
    pub full: PairEstimate,
    pub channels: Vec<ChannelInfidelity>,
}

impl ErrorBudget {
    pub fn channel(&self, c: NoiseChannel) -> Option<f64> {
        self.channels.iter().find(|x| x.channel == c).map(|x| x.infidelity)
    }
}

pub fn error_budget(setup: &PairSetup, noise: &NoiseConfig, n_trajectories: u64, seed: u64) -> Result<ErrorBudget> {
    // Deterministic configurations need a single trajectory.
    let count = |c: &NoiseConfig| if c.is_shot_invariant() && c.rates().total() == 0.0 { 1 } else { n_trajectories };
    let noiseless = pair_estimate(setup, &NoiseConfig::noiseless(), 1, seed)?;
    let full = pair_estimate(setup, noise, count(noise), seed)?;
    let channels = NoiseChannel::ALL
        .iter()
        .map(|&channel| {
            let iso = channel.isolate(noise);
            let est = pair_estimate(setup, &iso, count(&iso), seed)?;
            Ok(ChannelInfidelity { channel, infidelity: noiseless.fidelity - est.fidelity })
        })
        .collect::<Result<_>>()?;
    Ok(ErrorBudget { noiseless, full, channels })
}
