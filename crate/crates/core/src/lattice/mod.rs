//! Lattice geometry, drive schedules, basis construction and Hamiltonian terms.
//!
//! The model is a one-dimensional chain of two-level atoms (|g> = 0, |r> = 1)
//! with Hamiltonian
//! `H = Omega(t)/2 sum_i X_i - Delta(t) sum_i n_i + sum_{i<j} V_ij n_i n_j`,
//! `V_ij = C6 / (a |i-j|)^6`.

mod basis;
mod hamiltonian;
mod schedule;

pub use basis::{format_bits, parse_bits, site_bit, Basis, BasisKind, BasisSpec, DEFAULT_STATE_BUDGET};
pub use hamiltonian::HamiltonianTerms;
pub use schedule::{tangent_detuning, DetuningProfile, PulseSchedule, RabiProfile, DEFAULT_TANGENT_SHAPE};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Interaction strength `V/2pi` in MHz for atoms `spacing` um apart, with
/// `c6_over_2pi` in GHz um^6.
pub fn interaction_strength(spacing: f64, c6_over_2pi: f64) -> Result<f64> {
    if !(spacing > 0.0) || !spacing.is_finite() {
        return domain(format!("spacing must be positive, got {spacing}"));
    }
    if !(c6_over_2pi >= 0.0) || !c6_over_2pi.is_finite() {
        return domain(format!("C6 must be non-negative, got {c6_over_2pi}"));
    }
    Ok(c6_over_2pi * 1.0e3 / spacing.powi(6))
}

/// Spacing (um) at which the nearest-neighbour interaction equals `v_mhz`.
pub fn spacing_for_interaction(v_mhz: f64, c6_over_2pi: f64) -> Result<f64> {
    if !(v_mhz > 0.0) || !(c6_over_2pi > 0.0) {
        return domain("interaction and C6 must be positive");
    }
    Ok((c6_over_2pi * 1.0e3 / v_mhz).powf(1.0 / 6.0))
}

/// Chain geometry. Sites are indexed `0..n_atoms` from the left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub n_atoms: usize,
    /// Lattice constant in um.
    pub spacing: f64,
    /// C6/2pi in GHz um^6.
    #[serde(default = "default_c6")]
    pub c6_over_2pi: f64,
    /// Keep only pairs with `|i-j| <= interaction_range`; 0 keeps all pairs.
    #[serde(default)]
    pub interaction_range: usize,
}

pub const DEFAULT_C6_OVER_2PI: f64 = 230.0;

fn default_c6() -> f64 {
    DEFAULT_C6_OVER_2PI
}

impl LatticeSpec {
    pub fn new(n_atoms: usize, spacing: f64) -> Result<Self> {
        let spec = Self { n_atoms, spacing, c6_over_2pi: DEFAULT_C6_OVER_2PI, interaction_range: 0 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_atoms == 0 || self.n_atoms > 64 {
            return domain(format!("n_atoms must be in 1..=64, got {}", self.n_atoms));
        }
        if !(self.c6_over_2pi > 0.0) {
            return domain(format!("C6 must be positive, got {}", self.c6_over_2pi));
        }
        interaction_strength(self.spacing, self.c6_over_2pi).map(|_| ())
    }

    /// Nearest-neighbour `V/2pi` in MHz.
    pub fn nearest_neighbour_mhz(&self) -> f64 {
        self.c6_over_2pi * 1.0e3 / self.spacing.powi(6)
    }

    /// `V_ij/2pi` in MHz on the ideal lattice, honouring the range cut.
    pub fn pair_mhz(&self, i: usize, j: usize) -> f64 {
        let d = i.abs_diff(j);
        if d == 0 || (self.interaction_range > 0 && d > self.interaction_range) {
            return 0.0;
        }
        self.nearest_neighbour_mhz() / (d as f64).powi(6)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn interaction_values() {
        // 230e3 / 2.5^6 = 942.08 and 230e3 / 5^6 = 14.72.
        assert_relative_eq!(interaction_strength(2.5, 230.0).unwrap(), 942.08, max_relative = 1e-12);
        assert_relative_eq!(interaction_strength(5.0, 230.0).unwrap(), 14.72, max_relative = 1e-12);
        assert_eq!(interaction_strength(3.0, 0.0).unwrap(), 0.0);
        assert!(interaction_strength(0.0, 230.0).is_err());
        assert!(interaction_strength(-1.0, 230.0).is_err());
    }

    #[test]
    fn spacing_inverts_interaction() {
        let a = spacing_for_interaction(868.0, 230.0).unwrap();
        assert_relative_eq!(interaction_strength(a, 230.0).unwrap(), 868.0, max_relative = 1e-12);
    }

    #[test]
    fn range_cut() {
        let mut l = LatticeSpec::new(6, 3.0).unwrap();
        assert!(l.pair_mhz(0, 3) > 0.0);
        l.interaction_range = 2;
        assert_eq!(l.pair_mhz(0, 3), 0.0);
        assert_relative_eq!(l.pair_mhz(0, 2), l.nearest_neighbour_mhz() / 64.0);
    }
}
