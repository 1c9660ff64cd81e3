use serde::{Deserialize, Serialize};

use super::observables::{MagnetizationSpec, ObservableResult, Sublattices};
use crate::error::{domain, Error, Result};
use crate::imaging::ShotRecord;
use crate::lattice::site_bit;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Image {
    E1,
    E2,
    E3,
}

impl Image {
    pub fn bits(self, s: &ShotRecord) -> u64 {
        match self {
            Image::E1 => s.e1,
            Image::E2 => s.e2,
            Image::E3 => s.e3,
        }
    }
}

/// Anchor sites are those where `image` reads `value`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Condition {
    pub image: Image,
    pub value: bool,
    /// Keep only shots with exactly one erasure across `e1` and `e2`.
    pub single_erasure: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub d: i64,
    /// Probability that `e3` is empty at `j + d`.
    pub empty: ObservableResult,
}

fn single_erasure(s: &ShotRecord) -> bool {
    s.e1.count_ones() + s.e2.count_ones() == 1
}

fn bit(mask: u64, n: usize, i: usize) -> bool {
    mask & site_bit(n, i) != 0
}

/// `P(e3 empty at j + d | condition at j)` for `d` in `-max_d..=max_d`,
/// pooled over anchors `j` whose partner `j + d` lies on the chain.
pub fn conditional_profile(
    shots: &[ShotRecord],
    n_atoms: usize,
    condition: Condition,
    max_d: usize,
) -> Result<Vec<ProfilePoint>> {
    if n_atoms == 0 || n_atoms > 64 {
        return domain(format!("{n_atoms} sites cannot be packed into a shot"));
    }
    let max_d = max_d.min(n_atoms - 1) as i64;
    let width = (2 * max_d + 1) as usize;
    let mut hits = vec![0u64; width];
    let mut trials = vec![0u64; width];
    for s in shots.iter().filter(|s| !condition.single_erasure || single_erasure(s)) {
        let anchors = condition.image.bits(s);
        for j in 0..n_atoms {
            if bit(anchors, n_atoms, j) != condition.value {
                continue;
            }
            for d in -max_d..=max_d {
                let k = j as i64 + d;
                if k < 0 || k >= n_atoms as i64 {
                    continue;
                }
                let slot = (d + max_d) as usize;
                trials[slot] += 1;
                hits[slot] += u64::from(!bit(s.e3, n_atoms, k as usize));
            }
        }
    }
    if trials.iter().all(|&t| t == 0) {
        return Err(Error::EmptyStatistics(format!("no anchors satisfy {condition:?}")));
    }
    (0..width)
        .filter(|&i| trials[i] > 0)
        .map(|i| Ok(ProfilePoint { d: i as i64 - max_d, empty: ObservableResult::proportion(hits[i], trials[i])? }))
        .collect()
}

/// Mean erasure-anchored magnetization at one checkpoint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MagnetizationPoint {
    pub time: f64,
    pub mean: f64,
    /// Standard error of the mean; zero with a single shot.
    pub sem: f64,
    pub n_shots: u64,
}

/// Anchored magnetization for shots with exactly one erasure, found in
/// `anchor`. Checkpoints without such shots are skipped.
pub fn conditioned_magnetization_timeseries(
    checkpoints: &[(f64, &[ShotRecord])],
    n_atoms: usize,
    anchor: Image,
) -> Result<Vec<MagnetizationPoint>> {
    if anchor == Image::E3 {
        return domain("anchors must come from an erasure image");
    }
    let mut out = Vec::new();
    for &(time, shots) in checkpoints {
        let values: Vec<f64> = shots
            .iter()
            .filter(|s| single_erasure(s) && anchor.bits(s) != 0)
            .map(|s| {
                let site = anchor.bits(s).leading_zeros() as usize - (64 - n_atoms);
                Ok(Sublattices::new(n_atoms, MagnetizationSpec::ErasureAnchored { site })?.value(s.e3))
            })
            .collect::<Result<_>>()?;
        if values.is_empty() {
            continue;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        out.push(MagnetizationPoint { time, mean, sem: (var / n).sqrt(), n_shots: values.len() as u64 });
    }
    if out.is_empty() {
        return Err(Error::EmptyStatistics(format!("no single-erasure shots anchored in {anchor:?}")));
    }
    Ok(out)
}

/// Decay-erasure rate at distance `d` from a preparation erasure, against
/// the rate over all sites.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossCorrelation {
    pub d: usize,
    pub conditional: ObservableResult,
    pub baseline: ObservableResult,
    /// Two-proportion z score of `conditional - baseline`.
    pub z: f64,
}

/// `P(e2 = 1 at j +- d | e1 = 1 at j)`, both neighbours at distance `d`.
pub fn erasure_cross_correlation(shots: &[ShotRecord], n_atoms: usize, d: usize) -> Result<CrossCorrelation> {
    if d == 0 || d >= n_atoms {
        return domain(format!("distance {d} outside 1..{n_atoms}"));
    }
    let (mut hit, mut trials) = (0u64, 0u64);
    let (mut base_hit, mut base_trials) = (0u64, 0u64);
    for s in shots {
        base_trials += n_atoms as u64;
        base_hit += u64::from(s.e2.count_ones());
        for j in (0..n_atoms).filter(|&j| bit(s.e1, n_atoms, j)) {
            for k in [j.checked_sub(d), Some(j + d).filter(|&k| k < n_atoms)].into_iter().flatten() {
                trials += 1;
                hit += u64::from(bit(s.e2, n_atoms, k));
            }
        }
    }
    if trials == 0 {
        return Err(Error::EmptyStatistics("no preparation erasures with a partner at this distance".into()));
    }
    let conditional = ObservableResult::proportion(hit, trials)?;
    let baseline = ObservableResult::proportion(base_hit, base_trials)?;
    let pooled = (hit + base_hit) as f64 / (trials + base_trials) as f64;
    let se = (pooled * (1.0 - pooled) * (1.0 / trials as f64 + 1.0 / base_trials as f64)).sqrt();
    let z = if se > 0.0 { (conditional.value - baseline.value) / se } else { 0.0 };
    Ok(CrossCorrelation { d, conditional, baseline, z })
}

/// Mean fraction of sites flagged in `image`.
pub fn erasure_density(shots: &[ShotRecord], n_atoms: usize, image: Image) -> Result<ObservableResult> {
    let flagged: u64 = shots.iter().map(|s| u64::from(image.bits(s).count_ones())).sum();
    ObservableResult::proportion(flagged, shots.len() as u64 * n_atoms as u64)
}
