use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_lr;

use crate::error::{domain, Error, Result};

/// Site-resolved photon counting with a fixed detection threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImagingModel {
    /// Mean detected photons from an occupied site.
    pub lambda_atom: f64,
    /// Mean detected photons from an empty site.
    pub lambda_bg: f64,
    /// A site is declared occupied when `count >= threshold`.
    pub threshold: u32,
}

/// `P(X >= k)` for `X ~ Poisson(lambda)`.
pub fn poisson_tail(lambda: f64, k: u32) -> f64 {
    if k == 0 {
        1.0
    } else if lambda <= 0.0 {
        0.0
    } else {
        gamma_lr(k as f64, lambda)
    }
}

fn sample_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u32 {
    if lambda <= 0.0 {
        return 0;
    }
    let x: f64 = Poisson::new(lambda).expect("positive Poisson mean").sample(rng);
    x.min(u32::MAX as f64) as u32
}

impl ImagingModel {
    pub fn new(lambda_atom: f64, lambda_bg: f64, threshold: u32) -> Result<Self> {
        let m = Self { lambda_atom, lambda_bg, threshold };
        m.validate()?;
        Ok(m)
    }

    /// Noise-free imaging: empty sites never fire, occupied sites fire with
    /// probability `1 - exp(-40)`.
    pub fn perfect() -> Self {
        Self { lambda_atom: 40.0, lambda_bg: 0.0, threshold: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_bg >= 0.0) || !self.lambda_atom.is_finite() || !(self.lambda_atom > self.lambda_bg) {
            return domain(format!(
                "imaging needs lambda_atom > lambda_bg >= 0, got {} and {}",
                self.lambda_atom, self.lambda_bg
            ));
        }
        Ok(())
    }

    /// `P(detected | occupied)`.
    pub fn detection_probability(&self) -> f64 {
        poisson_tail(self.lambda_atom, self.threshold)
    }

    /// `P(detected | empty)`.
    pub fn false_positive_rate(&self) -> f64 {
        poisson_tail(self.lambda_bg, self.threshold)
    }

    /// Probability of correctly reporting an empty site.
    pub fn fp_fidelity(&self) -> f64 {
        1.0 - self.false_positive_rate()
    }

    /// Probability of correctly reporting an occupied site.
    pub fn fn_fidelity(&self) -> f64 {
        self.detection_probability()
    }

    pub fn with_threshold(&self, threshold: u32) -> Self {
        Self { threshold, ..*self }
    }

    /// Draw a photon count and binarize it.
    pub fn image_site<R: Rng + ?Sized>(&self, present: bool, rng: &mut R) -> (u32, bool) {
        let count = sample_poisson(if present { self.lambda_atom } else { self.lambda_bg }, rng);
        (count, count >= self.threshold)
    }
}

/// Smallest `lambda` with `poisson_tail(lambda, k) = target`, `0 < target < 1`.
fn invert_tail(target: f64, k: u32) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while poisson_tail(hi, k) < target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if poisson_tail(mid, k) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Poisson means reproducing the requested fidelities at `threshold`.
///
/// `fp_fidelity` is the probability an empty site reads empty,
/// `fn_fidelity` the probability an occupied site reads occupied.
pub fn calibrate_imaging(fp_fidelity: f64, fn_fidelity: f64, threshold: u32) -> Result<ImagingModel> {
    for (name, v) in [("fp_fidelity", fp_fidelity), ("fn_fidelity", fn_fidelity)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Calibration(format!("{name} = {v} is not a probability")));
        }
    }
    if threshold == 0 {
        return Err(Error::Calibration(
            "threshold 0 detects every site; only fp_fidelity = 0, fn_fidelity = 1 is reachable".into(),
        ));
    }
    if fn_fidelity >= 1.0 || fn_fidelity <= 0.0 {
        return Err(Error::Calibration(format!(
            "fn_fidelity must lie strictly inside (0, 1) for a finite Poisson mean, got {fn_fidelity}"
        )));
    }
    let lambda_bg = if fp_fidelity >= 1.0 { 0.0 } else { invert_tail(1.0 - fp_fidelity, threshold) };
    let lambda_atom = invert_tail(fn_fidelity, threshold);
    if !(lambda_atom > lambda_bg) {
        let frontier = 1.0 - fp_fidelity;
        return Err(Error::Calibration(format!(
            "at threshold {threshold}, fp_fidelity {fp_fidelity} forces P(detect | empty) = {frontier:.6}; \
             fn_fidelity must exceed it (achievable: fn_fidelity in ({frontier:.6}, 1))"
        )));
    }
    ImagingModel::new(lambda_atom, lambda_bg, threshold)
}

/// Independent per-atom failure to reach the qubit manifold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreparationModel {
    pub p_prep_error: f64,
}

/// Default per-atom preparation error: half of the per-pair value.
pub const DEFAULT_PREP_ERROR: f64 = 0.025;

impl Default for PreparationModel {
    fn default() -> Self {
        Self { p_prep_error: DEFAULT_PREP_ERROR }
    }
}

impl PreparationModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_prep_error) {
            return domain("p_prep_error must lie in [0, 1]");
        }
        Ok(())
    }

    /// Bit mask (site convention of `lattice::site_bit`) of failed sites.
    pub fn sample<R: Rng + ?Sized>(&self, n_atoms: usize, rng: &mut R) -> u64 {
        let mut mask = 0;
        for i in 0..n_atoms {
            if rng.random::<f64>() < self.p_prep_error {
                mask |= crate::lattice::site_bit(n_atoms, i);
            }
        }
        mask
    }
}

/// State-dependent survival through the imaging sequence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadoutModel {
    /// Probability a `|g>` atom survives one erasure image.
    pub survival_per_erasure_image: f64,
    /// Probability a surviving `|g>` atom is reported by the final image.
    pub final_detection_fidelity: f64,
    /// Probability a Rydberg atom is removed before the final image.
    pub autoionization_efficiency: f64,
}

impl Default for ReadoutModel {
    fn default() -> Self {
        Self { survival_per_erasure_image: 0.999_995_4, final_detection_fidelity: 0.999, autoionization_efficiency: 0.999 }
    }
}

impl ReadoutModel {
    pub fn perfect() -> Self {
        Self { survival_per_erasure_image: 1.0, final_detection_fidelity: 1.0, autoionization_efficiency: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("survival_per_erasure_image", self.survival_per_erasure_image),
            ("final_detection_fidelity", self.final_detection_fidelity),
            ("autoionization_efficiency", self.autoionization_efficiency),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return domain(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        Ok(())
    }
}

/// Many-body operating point: threshold 5 photons.
pub fn manybody_imaging() -> ImagingModel {
    calibrate_imaging(0.9975, 0.6, 5).expect("feasible operating point")
}

/// Two-atom operating point with equal error rates.
pub fn bell_imaging() -> ImagingModel {
    calibrate_imaging(0.98, 0.98, 5).expect("feasible operating point")
}
