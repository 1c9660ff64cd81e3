//! Shot-to-shot disorder and laser noise traces.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::lattice::LatticeSpec;
use crate::rng::{derive_seed, rng_from_seed, Stream};

/// One-sided power spectral density tabulated as `(f [MHz], S)` points,
/// linearly interpolated and zero outside the table. `S` is in MHz^2/MHz for
/// frequency noise and 1/MHz for relative intensity noise.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Psd {
    pub points: Vec<[f64; 2]>,
}

impl Psd {
    pub fn white(level: f64, f_lo: f64, f_hi: f64) -> Self {
        Self { points: vec![[f_lo, level], [f_hi, level]] }
    }

    pub fn is_empty(&self) -> bool {
        self.points.iter().all(|p| p[1] == 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.windows(2).any(|w| !(w[1][0] > w[0][0])) {
            return domain("PSD frequencies must be strictly increasing");
        }
        if self.points.iter().any(|p| !(p[0] >= 0.0) || !(p[1] >= 0.0) || !p[1].is_finite()) {
            return domain("PSD entries must be non-negative and finite");
        }
        Ok(())
    }

    pub fn at(&self, f: f64) -> f64 {
        let p = &self.points;
        if p.is_empty() || f < p[0][0] || f > p[p.len() - 1][0] {
            return 0.0;
        }
        match p.iter().position(|q| q[0] >= f) {
            Some(0) | None => p[0][1],
            Some(k) => {
                let [f0, s0] = p[k - 1];
                let [f1, s1] = p[k];
                s0 + (s1 - s0) * (f - f0) / (f1 - f0)
            }
        }
    }

    /// `int_a^b S(f) df` by the trapezoid rule over the table nodes.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let mut nodes = vec![a, b];
        nodes.extend(self.points.iter().map(|p| p[0]).filter(|&f| f > a && f < b));
        nodes.sort_by(f64::total_cmp);
        // Evaluate just inside each node so table edges integrate correctly.
        nodes
            .windows(2)
            .map(|w| {
                let eps = 1e-12 * (w[1] - w[0]);
                0.5 * (self.at(w[0] + eps) + self.at(w[1] - eps)) * (w[1] - w[0])
            })
            .sum()
    }
}

/// Longest synthesis window, in samples.
const MAX_SYNTHESIS_LEN: usize = 1 << 16;
const MIN_SYNTHESIS_LEN: usize = 1 << 12;

/// Random-phase Fourier synthesis of a stationary trace with one-sided PSD
/// `psd`, sampled at `n` points spaced `dt` us apart.
///
/// Spectral content below the window resolution is drawn as a single static
/// Gaussian offset with the matching variance, so the per-sample variance is
/// `int S df` regardless of window length.
pub fn synthesize_trace<R: Rng + ?Sized>(psd: &Psd, n: usize, dt: f64, rng: &mut R) -> Vec<f64> {
    if psd.is_empty() || n == 0 {
        return vec![0.0; n];
    }
    let m = n.next_power_of_two().clamp(MIN_SYNTHESIS_LEN, MAX_SYNTHESIS_LEN).max(n.next_power_of_two());
    let df = 1.0 / (m as f64 * dt);
    let mut spectrum = vec![Complex64::default(); m];
    for (k, bin) in spectrum.iter_mut().enumerate().take(m / 2).skip(1) {
        let power = psd.integral((k as f64 - 0.5) * df, (k as f64 + 0.5) * df);
        let amp = (2.0 * power).sqrt();
        let phase = rng.random::<f64>() * std::f64::consts::TAU;
        *bin = Complex64::from_polar(amp, phase);
    }
    FftPlanner::new().plan_fft_inverse(m).process(&mut spectrum);
    let static_var = psd.integral(0.0, 0.5 * df);
    let offset = if static_var > 0.0 { static_var.sqrt() * rng.sample::<f64, _>(StandardNormal) } else { 0.0 };
    spectrum[..n].iter().map(|z| z.re + offset).collect()
}

/// Noise model for one experimental configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Static per-atom detuning spread (MHz).
    pub doppler_sigma: f64,
    /// Static per-shot relative fluctuation of `Omega^2`.
    pub intensity_rel_sigma: f64,
    /// Per-atom thermal position spread (um), each axis.
    pub position_sigma: f64,
    /// Per-shot beam-centre jitter (um), transverse axes.
    pub pointing_sigma: f64,
    /// Gaussian beam waist (um) converting transverse offsets to Rabi scale.
    pub beam_waist: f64,
    /// Laser frequency noise PSD (MHz^2/MHz).
    pub laser_frequency_psd: Psd,
    /// Relative intensity noise PSD (1/MHz).
    pub laser_intensity_psd: Psd,
    /// Rydberg decay lifetime into erasure-detectable states (us).
    pub bright_lifetime: f64,
    /// Rydberg decay lifetime into undetectable states (us).
    pub dark_lifetime: f64,
    /// Rate per MHz^2 at which bright-decayed atoms are photo-ionized by the
    /// drive, `rate = coeff * Omega(t)^2` (1/us).
    pub photoionization_coeff: f64,
    /// Sample spacing of the synthesized noise traces (us).
    pub trace_dt: f64,
}

pub const BRIGHT_LIFETIME_US: f64 = 168.0;
pub const TOTAL_LIFETIME_US: f64 = 80.0;

/// Dark lifetime such that bright and dark channels combine to `total`.
pub fn dark_lifetime_for_total(bright: f64, total: f64) -> f64 {
    1.0 / (1.0 / total - 1.0 / bright)
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::noiseless()
    }
}

impl NoiseConfig {
    /// No disorder, no laser noise, infinite lifetimes.
    pub fn noiseless() -> Self {
        Self {
            doppler_sigma: 0.0,
            intensity_rel_sigma: 0.0,
            position_sigma: 0.0,
            pointing_sigma: 0.0,
            beam_waist: 20.0,
            laser_frequency_psd: Psd::default(),
            laser_intensity_psd: Psd::default(),
            bright_lifetime: f64::INFINITY,
            dark_lifetime: f64::INFINITY,
            photoionization_coeff: 0.0,
            trace_dt: 1e-3,
        }
    }

    /// Decay only, with the measured lifetimes.
    pub fn decay_only() -> Self {
        Self {
            bright_lifetime: BRIGHT_LIFETIME_US,
            dark_lifetime: dark_lifetime_for_total(BRIGHT_LIFETIME_US, TOTAL_LIFETIME_US),
            ..Self::noiseless()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("doppler_sigma", self.doppler_sigma),
            ("intensity_rel_sigma", self.intensity_rel_sigma),
            ("position_sigma", self.position_sigma),
            ("pointing_sigma", self.pointing_sigma),
            ("photoionization_coeff", self.photoionization_coeff),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return domain(format!("{name} must be non-negative and finite, got {v}"));
            }
        }
        if !(self.beam_waist > 0.0) {
            return domain("beam_waist must be positive");
        }
        if !(self.bright_lifetime > 0.0) || !(self.dark_lifetime > 0.0) {
            return domain("lifetimes must be positive");
        }
        if !(self.trace_dt > 0.0) {
            return domain("trace_dt must be positive");
        }
        self.laser_frequency_psd.validate()?;
        self.laser_intensity_psd.validate()
    }

    /// True when every shot sees the same Hamiltonian (decay may still act).
    pub fn is_shot_invariant(&self) -> bool {
        self.doppler_sigma == 0.0
            && self.intensity_rel_sigma == 0.0
            && self.position_sigma == 0.0
            && self.pointing_sigma == 0.0
            && self.laser_frequency_psd.is_empty()
            && self.laser_intensity_psd.is_empty()
    }

    pub fn rates(&self) -> DecayRates {
        DecayRates {
            bright: 1.0 / self.bright_lifetime,
            dark: 1.0 / self.dark_lifetime,
            photoionization: self.photoionization_coeff,
        }
    }
}

/// Decay rates in 1/us.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayRates {
    pub bright: f64,
    pub dark: f64,
    pub photoionization: f64,
}

impl DecayRates {
    pub const NONE: Self = Self { bright: 0.0, dark: 0.0, photoionization: 0.0 };

    pub fn total(&self) -> f64 {
        self.bright + self.dark
    }
}

/// Noise traces on a uniform grid starting at `t = 0`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NoiseTraces {
    pub dt: f64,
    /// Relative intensity deviation; the Rabi frequency scales by `sqrt(1 + x)`.
    pub intensity: Vec<f64>,
    /// Detuning deviation (MHz).
    pub detuning: Vec<f64>,
}

fn lerp(trace: &[f64], dt: f64, t: f64) -> f64 {
    if trace.is_empty() {
        return 0.0;
    }
    let x = (t / dt).max(0.0);
    let k = x.floor() as usize;
    if k + 1 >= trace.len() {
        return trace[trace.len() - 1];
    }
    let w = x - k as f64;
    trace[k] * (1.0 - w) + trace[k + 1] * w
}

impl NoiseTraces {
    #[inline]
    pub fn intensity_at(&self, t: f64) -> f64 {
        lerp(&self.intensity, self.dt, t)
    }
    #[inline]
    pub fn detuning_at(&self, t: f64) -> f64 {
        lerp(&self.detuning, self.dt, t)
    }
    pub fn is_empty(&self) -> bool {
        self.intensity.is_empty() && self.detuning.is_empty()
    }
}

/// Per-shot noise realization.
#[derive(Clone, Debug, PartialEq)]
pub struct ShotNoise {
    pub seed: u64,
    /// Static detuning offset per atom (MHz).
    pub detuning_offsets: Vec<f64>,
    /// Global Rabi scale from static intensity fluctuation.
    pub omega_scale: f64,
    /// Per-atom displacement from the ideal site (um).
    pub positions: Vec<[f64; 3]>,
    /// Beam centre offset in the transverse plane (um).
    pub pointing: [f64; 2],
    /// Per-atom Rabi scale from the beam profile.
    pub site_rabi: Vec<f64>,
    pub traces: NoiseTraces,
}

impl ShotNoise {
    /// Realization with every noise source switched off.
    pub fn quiet(n_atoms: usize) -> Self {
        Self {
            seed: 0,
            detuning_offsets: vec![0.0; n_atoms],
            omega_scale: 1.0,
            positions: vec![[0.0; 3]; n_atoms],
            pointing: [0.0; 2],
            site_rabi: vec![1.0; n_atoms],
            traces: NoiseTraces::default(),
        }
    }

    /// Multiplier on `V_ij` from the displaced positions.
    pub fn pair_scale(&self, spacing: f64, i: usize, j: usize) -> f64 {
        let (pi, pj) = (self.positions[i], self.positions[j]);
        if pi == [0.0; 3] && pj == [0.0; 3] {
            return 1.0;
        }
        let d0 = spacing * (j as f64 - i as f64);
        let dx = d0 + pj[0] - pi[0];
        let dy = pj[1] - pi[1];
        let dz = pj[2] - pi[2];
        let r2 = dx * dx + dy * dy + dz * dz;
        (d0 * d0 / r2).powi(3)
    }
}

/// Draw the noise realization for shot `shot_index`, covering `[0, duration]`.
pub fn sample_shot_noise(
    config: &NoiseConfig,
    lattice: &LatticeSpec,
    master_seed: u64,
    shot_index: u64,
    duration: f64,
) -> Result<ShotNoise> {
    config.validate()?;
    if !(duration >= 0.0) {
        return domain("duration must be non-negative");
    }
    let n = lattice.n_atoms;
    let seed = derive_seed(master_seed, Stream::Noise, shot_index);
    let mut rng = rng_from_seed(seed);
    let gauss = |rng: &mut _, sigma: f64| -> f64 {
        if sigma > 0.0 {
            Normal::new(0.0, sigma).unwrap().sample(rng)
        } else {
            0.0
        }
    };
    let detuning_offsets: Vec<f64> = (0..n).map(|_| gauss(&mut rng, config.doppler_sigma)).collect();
    let intensity = (1.0 + gauss(&mut rng, config.intensity_rel_sigma)).max(0.0);
    let positions: Vec<[f64; 3]> = (0..n)
        .map(|_| {
            [
                gauss(&mut rng, config.position_sigma),
                gauss(&mut rng, config.position_sigma),
                gauss(&mut rng, config.position_sigma),
            ]
        })
        .collect();
    let pointing = [gauss(&mut rng, config.pointing_sigma), gauss(&mut rng, config.pointing_sigma)];
    let w2 = config.beam_waist * config.beam_waist;
    let site_rabi = positions
        .iter()
        .map(|p| {
            let dy = p[1] - pointing[0];
            let dz = p[2] - pointing[1];
            (-(dy * dy + dz * dz) / w2).exp()
        })
        .collect();
    let samples = (duration / config.trace_dt).ceil() as usize + 2;
    let traces = NoiseTraces {
        dt: config.trace_dt,
        intensity: if config.laser_intensity_psd.is_empty() {
            Vec::new()
        } else {
            synthesize_trace(&config.laser_intensity_psd, samples, config.trace_dt, &mut rng)
        },
        detuning: if config.laser_frequency_psd.is_empty() {
            Vec::new()
        } else {
            synthesize_trace(&config.laser_frequency_psd, samples, config.trace_dt, &mut rng)
        },
    };
    Ok(ShotNoise {
        seed,
        detuning_offsets,
        omega_scale: intensity.sqrt(),
        positions,
        pointing,
        site_rabi,
        traces,
    })
}
