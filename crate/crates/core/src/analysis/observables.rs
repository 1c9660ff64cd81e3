use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bell::BetaDist;
use crate::error::{domain, Error, Result};
use crate::imaging::{excise, rebinarize, ExcisionPolicy, ShotRecord};
use crate::lattice::site_bit;

/// A proportion with its Beta(k+1, n-k+1) 68% interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableResult {
    pub value: f64,
    /// 16% and 84% posterior quantiles, widened to contain `value`.
    pub interval: (f64, f64),
    pub successes: u64,
    pub n_shots_used: u64,
}

impl ObservableResult {
    pub fn proportion(successes: u64, trials: u64) -> Result<Self> {
        if trials == 0 {
            return Err(Error::EmptyStatistics("no shots left to estimate a proportion".into()));
        }
        let d = BetaDist::from_counts(successes, trials)?;
        let value = successes as f64 / trials as f64;
        let (lo, hi) = (d.quantile(0.16), d.quantile(0.84));
        Ok(Self { value, interval: (lo.min(value), hi.max(value)), successes, n_shots_used: trials })
    }

    /// Binomial standard error, floored by half a count.
    pub fn sigma(&self) -> f64 {
        let n = self.n_shots_used as f64;
        let p = self.value.clamp(0.5 / n, 1.0 - 0.5 / n);
        (p * (1.0 - p) / n).sqrt()
    }
}

/// Assignment of sites to the two sublattices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MagnetizationSpec {
    /// `A` = odd sites, `B` = even sites.
    FixedParity,
    /// `A` = odd distance from `site`, `B` = even nonzero distance; the
    /// anchor itself is excluded and the sign is flipped, so a pinned order
    /// with Rydberg atoms at odd distance reads negative.
    ErasureAnchored { site: usize },
}

/// Site masks and sign of a magnetization spec.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sublattices {
    pub a: u64,
    pub b: u64,
    pub sign: i64,
}

impl Sublattices {
    pub fn new(n_atoms: usize, spec: MagnetizationSpec) -> Result<Self> {
        if n_atoms == 0 || n_atoms > 64 {
            return domain(format!("{n_atoms} sites cannot be packed into a shot"));
        }
        let mut s = Sublattices { a: 0, b: 0, sign: 1 };
        let anchor = match spec {
            MagnetizationSpec::FixedParity => None,
            MagnetizationSpec::ErasureAnchored { site } => {
                if site >= n_atoms {
                    return domain(format!("anchor {site} outside a chain of {n_atoms}"));
                }
                s.sign = -1;
                Some(site)
            }
        };
        for i in 0..n_atoms {
            let dist = match anchor {
                None => i,
                Some(j) if i == j => continue,
                Some(j) => i.abs_diff(j),
            };
            if dist % 2 == 1 {
                s.a |= site_bit(n_atoms, i);
            } else {
                s.b |= site_bit(n_atoms, i);
            }
        }
        if s.a == 0 || s.b == 0 {
            return Err(Error::EmptyStatistics(format!("{spec:?} leaves an empty sublattice at N = {n_atoms}")));
        }
        Ok(s)
    }

    pub fn sizes(&self) -> (i64, i64) {
        (self.a.count_ones() as i64, self.b.count_ones() as i64)
    }

    /// `M * N_A * N_B`, an exact integer.
    pub fn scaled(&self, e3: u64) -> i64 {
        let (na, nb) = self.sizes();
        let za = na - 2 * (e3 & self.a).count_ones() as i64;
        let zb = nb - 2 * (e3 & self.b).count_ones() as i64;
        self.sign * (za * nb - zb * na)
    }

    pub fn value(&self, e3: u64) -> f64 {
        let (na, nb) = self.sizes();
        self.scaled(e3) as f64 / (na * nb) as f64
    }
}

/// Eigenvalue of `Z_A/N_A - Z_B/N_B` (sign flipped for anchored specs).
pub fn magnetization(e3: u64, n_atoms: usize, spec: MagnetizationSpec) -> Result<f64> {
    Ok(Sublattices::new(n_atoms, spec)?.value(e3))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub m: f64,
    pub count: u64,
    pub probability: f64,
}

/// Distribution over every reachable eigenvalue, zero bins included.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MagnetizationHistogram {
    pub n_a: usize,
    pub n_b: usize,
    pub n_shots: u64,
    pub bins: Vec<HistogramBin>,
}

impl MagnetizationHistogram {
    /// Largest over smallest probability among bins with `|M| <= 1`.
    pub fn flatness(&self) -> f64 {
        let inner: Vec<f64> = self.bins.iter().filter(|b| b.m.abs() <= 1.0 + 1e-12).map(|b| b.probability).collect();
        let max = inner.iter().cloned().fold(0.0, f64::max);
        let min = inner.iter().cloned().fold(f64::INFINITY, f64::min);
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    pub fn mode(&self) -> f64 {
        self.bins.iter().max_by_key(|b| b.count).map_or(0.0, |b| b.m)
    }
}

pub fn magnetization_histogram(
    shots: &[ShotRecord],
    n_atoms: usize,
    policy: ExcisionPolicy,
) -> Result<MagnetizationHistogram> {
    let sub = Sublattices::new(n_atoms, MagnetizationSpec::FixedParity)?;
    let kept = excise(shots, policy).kept;
    if kept.is_empty() {
        return Err(Error::EmptyStatistics(format!("no shots left after {} excision", policy.name())));
    }
    let (na, nb) = sub.sizes();
    let mut counts: BTreeMap<i64, u64> = BTreeMap::new();
    for ka in 0..=na {
        for kb in 0..=nb {
            counts.insert((2 * ka - na) * nb - (2 * kb - nb) * na, 0);
        }
    }
    let observed = kept
        .par_iter()
        .fold(BTreeMap::new, |mut m: BTreeMap<i64, u64>, s| {
            *m.entry(sub.scaled(s.e3)).or_default() += 1;
            m
        })
        .reduce(BTreeMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_default() += v;
            }
            a
        });
    for (k, v) in observed {
        *counts.entry(k).or_default() += v;
    }
    let total = kept.len() as u64;
    let scale = (na * nb) as f64;
    let bins = counts
        .into_iter()
        .map(|(k, c)| HistogramBin { m: k as f64 / scale, count: c, probability: c as f64 / total as f64 })
        .collect();
    Ok(MagnetizationHistogram { n_a: na as usize, n_b: nb as usize, n_shots: total, bins })
}

/// The two Neel patterns of `e3`: ground atoms on even sites, then on odd.
pub fn afm_patterns(n_atoms: usize) -> (u64, u64) {
    (0..n_atoms).fold((0, 0), |(even, odd), i| {
        if i % 2 == 0 {
            (even | site_bit(n_atoms, i), odd)
        } else {
            (even, odd | site_bit(n_atoms, i))
        }
    })
}

/// Fraction of kept shots showing either Neel pattern.
pub fn afm_probability(shots: &[ShotRecord], n_atoms: usize, policy: ExcisionPolicy) -> Result<ObservableResult> {
    if n_atoms % 2 == 1 || n_atoms == 0 || n_atoms > 64 {
        return domain(format!("AFM probability needs an even chain, got N = {n_atoms}"));
    }
    let (p, q) = afm_patterns(n_atoms);
    let kept = excise(shots, policy).kept;
    let hits = kept.iter().filter(|s| s.e3 == p || s.e3 == q).count() as u64;
    ObservableResult::proportion(hits, kept.len() as u64)
}

/// Change in P_AFM when tightening excision from `looser` to `stricter`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyGap {
    pub stricter: ExcisionPolicy,
    pub looser: ExcisionPolicy,
    /// `P(stricter) - P(looser)`.
    pub difference: f64,
    pub sigma: f64,
    /// Shots kept by `looser` but dropped by `stricter`.
    pub n_dropped: u64,
}

impl PolicyGap {
    pub fn z(&self) -> f64 {
        if self.sigma > 0.0 {
            self.difference / self.sigma
        } else {
            f64::INFINITY * self.difference.signum()
        }
    }
}

/// The kept sets are nested, so the two estimates share most shots. With
/// `K` kept by both and `D` dropped by the stricter policy,
/// `P(K) - P(K+D) = f (P(K) - P(D))`, `f = |D| / |K+D|`, whose error comes
/// from the two disjoint sets alone.
pub fn afm_policy_gap(
    shots: &[ShotRecord],
    n_atoms: usize,
    stricter: ExcisionPolicy,
    looser: ExcisionPolicy,
) -> Result<PolicyGap> {
    if shots.iter().any(|s| stricter.keeps(s) && !looser.keeps(s)) {
        return domain(format!("{} does not keep a subset of {}", stricter.name(), looser.name()));
    }
    let kept = afm_probability(shots, n_atoms, stricter)?;
    let wide = afm_probability(shots, n_atoms, looser)?;
    let (p, q) = afm_patterns(n_atoms);
    let dropped: Vec<&ShotRecord> = shots.iter().filter(|s| looser.keeps(s) && !stricter.keeps(s)).collect();
    let n_dropped = dropped.len() as u64;
    let sigma = if n_dropped == 0 {
        0.0
    } else {
        let hits = dropped.iter().filter(|s| s.e3 == p || s.e3 == q).count() as u64;
        let d = ObservableResult::proportion(hits, n_dropped)?;
        let f = n_dropped as f64 / wide.n_shots_used as f64;
        f * (kept.sigma().powi(2) + d.sigma().powi(2)).sqrt()
    };
    Ok(PolicyGap { stricter, looser, difference: kept.value - wide.value, sigma, n_dropped })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub threshold: u32,
    pub retention: f64,
    /// `None` when no shot survives.
    pub afm: Option<ObservableResult>,
}

/// Re-binarize stored erasure counts at each threshold and recompute P_AFM.
pub fn threshold_scan(
    shots: &[ShotRecord],
    n_atoms: usize,
    thresholds: &[u32],
    policy: ExcisionPolicy,
) -> Result<Vec<ThresholdPoint>> {
    if shots.iter().any(|s| s.counts_e1.is_none() && s.counts_e2.is_none()) {
        return domain("threshold scan needs shots with stored photon counts");
    }
    thresholds
        .iter()
        .map(|&t| {
            let rebinned: Vec<ShotRecord> = shots.iter().map(|s| rebinarize(s, n_atoms, t)).collect();
            let retention = excise(&rebinned, policy).retention();
            let afm = match afm_probability(&rebinned, n_atoms, policy) {
                Ok(r) => Some(r),
                Err(Error::EmptyStatistics(_)) => None,
                Err(e) => return Err(e),
            };
            Ok(ThresholdPoint { threshold: t, retention, afm })
        })
        .collect()
}

/// Ratio of two proportions with a first-order error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub value: f64,
    pub sigma: f64,
}

impl Ratio {
    fn of(num: &ObservableResult, den: &ObservableResult) -> Self {
        if den.value == 0.0 {
            return Self { value: f64::NAN, sigma: f64::NAN };
        }
        let value = num.value / den.value;
        let rel = |r: &ObservableResult| r.sigma() / r.value.max(0.5 / r.n_shots_used as f64);
        Self { value, sigma: value * (rel(num).powi(2) + rel(den).powi(2)).sqrt() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub n_atoms: usize,
    pub none: ObservableResult,
    pub prep_only: ObservableResult,
    pub full: ObservableResult,
    /// `P_AFM(full) / P_AFM(none)`.
    pub gain_vs_none: Ratio,
    /// `P_AFM(full) / P_AFM(prep only)`.
    pub gain_vs_prep: Ratio,
}

/// Excision gains per system size.
pub fn n_scaling(batches: &[(usize, &[ShotRecord])]) -> Result<Vec<ScalingPoint>> {
    if batches.len() < 2 {
        return domain("system-size scaling needs at least two sizes");
    }
    batches
        .iter()
        .map(|&(n, shots)| {
            let none = afm_probability(shots, n, ExcisionPolicy::None)?;
            let prep_only = afm_probability(shots, n, ExcisionPolicy::PrepOnly)?;
            let full = afm_probability(shots, n, ExcisionPolicy::PrepAndDecay)?;
            Ok(ScalingPoint {
                n_atoms: n,
                gain_vs_none: Ratio::of(&full, &none),
                gain_vs_prep: Ratio::of(&full, &prep_only),
                none,
                prep_only,
                full,
            })
        })
        .collect()
}
