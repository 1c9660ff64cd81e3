//! Many-body observables and erasure diagnostics on shot batches.
//!
//! Readout convention: a set bit of `e3` is an atom found in `|g>`, so it
//! carries `Z = -1`; an empty site (auto-ionized Rydberg atom, or a lost
//! atom) carries `Z = +1`. Sites are indexed from 0 at the left end.

mod conditional;
mod observables;

pub use conditional::{
    conditional_profile, conditioned_magnetization_timeseries, erasure_cross_correlation, erasure_density, Condition,
    CrossCorrelation, Image, MagnetizationPoint, ProfilePoint,
};
pub use observables::{
    afm_patterns, afm_policy_gap, afm_probability, magnetization, magnetization_histogram, n_scaling, threshold_scan, HistogramBin,
    MagnetizationHistogram, MagnetizationSpec, ObservableResult, PolicyGap, Ratio, ScalingPoint, Sublattices, ThresholdPoint,
};
