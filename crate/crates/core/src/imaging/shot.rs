use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{ImagingModel, ReadoutModel};
use crate::dynamics::Leak;
use crate::error::{domain, Result};
use crate::lattice::site_bit;

/// Hidden per-site outcome, for validation only.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum SiteTruth {
    Ground = 0,
    Rydberg = 1,
    PrepError = 2,
    BrightDecay = 3,
    DarkDecay = 4,
}

impl SiteTruth {
    pub fn code(self) -> char {
        match self {
            SiteTruth::Ground => 'g',
            SiteTruth::Rydberg => 'r',
            SiteTruth::PrepError => 'p',
            SiteTruth::BrightDecay => 'b',
            SiteTruth::DarkDecay => 'd',
        }
    }

    pub fn from_code(c: char) -> Option<Self> {
        Some(match c {
            'g' => SiteTruth::Ground,
            'r' => SiteTruth::Rydberg,
            'p' => SiteTruth::PrepError,
            'b' => SiteTruth::BrightDecay,
            'd' => SiteTruth::DarkDecay,
            _ => return None,
        })
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        Self::from_code(['g', 'r', 'p', 'b', 'd'].get(b as usize).copied()?)
    }
}

/// Per-site truth from a trajectory outcome.
///
/// `sample` holds the Rydberg bits of the final configuration, `leaked` the
/// leak label of every site and `prep_errors` the sites that never entered
/// the qubit manifold.
pub fn site_truths(n_atoms: usize, prep_errors: u64, sample: u64, leaked: &[Leak]) -> Result<Vec<SiteTruth>> {
    if leaked.len() != n_atoms {
        return domain(format!("leak labels cover {} sites, expected {n_atoms}", leaked.len()));
    }
    Ok((0..n_atoms)
        .map(|i| {
            let bit = site_bit(n_atoms, i);
            if prep_errors & bit != 0 {
                SiteTruth::PrepError
            } else {
                match leaked[i] {
                    Leak::Bright => SiteTruth::BrightDecay,
                    Leak::Dark => SiteTruth::DarkDecay,
                    Leak::None if sample & bit != 0 => SiteTruth::Rydberg,
                    Leak::None => SiteTruth::Ground,
                }
            }
        })
        .collect())
}

/// Where erasure images sit in the experimental sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageSequence {
    /// Erasure image before the drive (`e1`) and after it (`e2`).
    Sweep,
    /// A single erasure image after the drive, stored in `e2`; `e1` is empty.
    Bell,
}

impl ImageSequence {
    pub fn erasure_images(self) -> i32 {
        match self {
            ImageSequence::Sweep => 2,
            ImageSequence::Bell => 1,
        }
    }
}

/// Everything that turns truth labels into images.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShotModels {
    pub erasure: ImagingModel,
    pub final_image: ImagingModel,
    pub readout: ReadoutModel,
    pub sequence: ImageSequence,
    /// Keep raw erasure-image photon counts for later re-thresholding.
    pub keep_counts: bool,
}

impl ShotModels {
    pub fn validate(&self) -> Result<()> {
        self.erasure.validate()?;
        self.final_image.validate()?;
        self.readout.validate()
    }
}

/// One experimental repetition. Bit `site_bit(n, i)` of each image refers
/// to site `i`; in `e3` a set bit means the atom was found in `|g>`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub shot_id: u64,
    pub seed: u64,
    pub trajectory: u64,
    pub e1: u64,
    pub e2: u64,
    pub e3: u64,
    pub counts_e1: Option<Vec<u16>>,
    pub counts_e2: Option<Vec<u16>>,
    pub truth: Option<Vec<SiteTruth>>,
}

impl ShotRecord {
    /// Shot with the given images and no counts or truth.
    pub fn from_images(shot_id: u64, e1: u64, e2: u64, e3: u64) -> Self {
        Self { shot_id, seed: 0, trajectory: shot_id, e1, e2, e3, counts_e1: None, counts_e2: None, truth: None }
    }
}

fn image_into<R: Rng + ?Sized>(
    model: &ImagingModel,
    present: impl Iterator<Item = bool>,
    n_atoms: usize,
    counts: Option<&mut Vec<u16>>,
    rng: &mut R,
) -> u64 {
    let mut bits = 0;
    let mut raw = Vec::with_capacity(n_atoms);
    for (i, p) in present.enumerate() {
        let (c, hit) = model.image_site(p, rng);
        if hit {
            bits |= site_bit(n_atoms, i);
        }
        raw.push(c.min(u16::MAX as u32) as u16);
    }
    if let Some(out) = counts {
        *out = raw;
    }
    bits
}

/// Three images from per-site truth.
///
/// An erasure image shows atoms in the erasure-detectable manifold: failed
/// preparations (before the drive) and bright decays (after it). Imaged
/// erasure atoms are ejected. `|g>` atoms survive each erasure image with
/// `survival_per_erasure_image`; Rydberg atoms escape auto-ionization with
/// `1 - autoionization_efficiency`. Either kind, when still trapped, is
/// retained by the final readout with `final_detection_fidelity` and then
/// imaged by `final_image`.
pub fn image_shot<R: Rng + ?Sized>(truth: &[SiteTruth], models: &ShotModels, rng: &mut R) -> (u64, u64, u64, Option<Vec<u16>>, Option<Vec<u16>>) {
    let n = truth.len();
    let mut c1 = models.keep_counts.then(Vec::new);
    let mut c2 = models.keep_counts.then(Vec::new);
    let e1 = match models.sequence {
        ImageSequence::Sweep => {
            image_into(&models.erasure, truth.iter().map(|t| *t == SiteTruth::PrepError), n, c1.as_mut(), rng)
        }
        ImageSequence::Bell => {
            c1 = None;
            0
        }
    };
    let in_second = |t: &SiteTruth| match models.sequence {
        ImageSequence::Sweep => *t == SiteTruth::BrightDecay,
        ImageSequence::Bell => matches!(t, SiteTruth::BrightDecay | SiteTruth::PrepError),
    };
    let e2 = image_into(&models.erasure, truth.iter().map(in_second), n, c2.as_mut(), rng);
    let ro = &models.readout;
    let survive = ro.survival_per_erasure_image.powi(models.sequence.erasure_images());
    let present: Vec<bool> = truth
        .iter()
        .map(|t| {
            let trapped = match t {
                SiteTruth::Ground => rng.random::<f64>() < survive,
                SiteTruth::Rydberg => rng.random::<f64>() >= ro.autoionization_efficiency,
                _ => false,
            };
            trapped && rng.random::<f64>() < ro.final_detection_fidelity
        })
        .collect();
    let e3 = image_into(&models.final_image, present.into_iter(), n, None, rng);
    (e1, e2, e3, c1, c2)
}

/// Full shot synthesis from a sampled trajectory outcome.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_shot<R: Rng + ?Sized>(
    shot_id: u64,
    seed: u64,
    trajectory: u64,
    sample: u64,
    leaked: &[Leak],
    prep_errors: u64,
    models: &ShotModels,
    keep_truth: bool,
    rng: &mut R,
) -> Result<ShotRecord> {
    let truth = site_truths(leaked.len(), prep_errors, sample, leaked)?;
    let (e1, e2, e3, counts_e1, counts_e2) = image_shot(&truth, models, rng);
    Ok(ShotRecord { shot_id, seed, trajectory, e1, e2, e3, counts_e1, counts_e2, truth: keep_truth.then_some(truth) })
}

/// Post-selection on detected erasures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExcisionPolicy {
    None,
    PrepOnly,
    PrepAndDecay,
}

impl ExcisionPolicy {
    pub const ALL: [ExcisionPolicy; 3] = [ExcisionPolicy::None, ExcisionPolicy::PrepOnly, ExcisionPolicy::PrepAndDecay];

    pub fn keeps(self, shot: &ShotRecord) -> bool {
        match self {
            ExcisionPolicy::None => true,
            ExcisionPolicy::PrepOnly => shot.e1 == 0,
            ExcisionPolicy::PrepAndDecay => shot.e1 == 0 && shot.e2 == 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ExcisionPolicy::None => "none",
            ExcisionPolicy::PrepOnly => "prep_only",
            ExcisionPolicy::PrepAndDecay => "prep_and_decay",
        }
    }
}

/// Shots kept by a policy.
#[derive(Clone, Debug)]
pub struct Excised<'a> {
    pub kept: Vec<&'a ShotRecord>,
    pub total: usize,
}

impl Excised<'_> {
    /// Kept fraction; zero for an empty batch.
    pub fn retention(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.kept.len() as f64 / self.total as f64
        }
    }
}

pub fn excise(shots: &[ShotRecord], policy: ExcisionPolicy) -> Excised<'_> {
    Excised { kept: shots.iter().filter(|s| policy.keeps(s)).collect(), total: shots.len() }
}

/// Recompute erasure images from stored counts at a new threshold. Images
/// without stored counts are kept as they are.
pub fn rebinarize(shot: &ShotRecord, n_atoms: usize, threshold: u32) -> ShotRecord {
    let bits = |counts: &Option<Vec<u16>>, old: u64| match counts {
        Some(c) => c
            .iter()
            .enumerate()
            .filter(|(_, &k)| k as u32 >= threshold)
            .fold(0, |m, (i, _)| m | site_bit(n_atoms, i)),
        None => old,
    };
    ShotRecord { e1: bits(&shot.counts_e1, shot.e1), e2: bits(&shot.counts_e2, shot.e2), ..shot.clone() }
}
