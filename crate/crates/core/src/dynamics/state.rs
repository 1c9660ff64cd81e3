use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::lattice::{site_bit, Basis, BasisKind, DEFAULT_STATE_BUDGET};

/// Decay branch of a Rydberg atom.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayChannel {
    /// Lands in states the erasure image detects.
    Bright,
    /// Lands in states invisible to the erasure image.
    Dark,
}

/// Leakage status of one atom.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Leak {
    #[default]
    None,
    Bright,
    Dark,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub time: f64,
    pub site: usize,
    pub channel: DecayChannel,
}

/// Pure state of the atoms still coupled to the drive.
///
/// Leaked atoms and atoms that were never prepared are inactive sites of
/// `basis`. Amplitudes are not necessarily normalized inside a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState {
    pub basis: Basis,
    pub amplitudes: Vec<Complex64>,
    pub leaked: Vec<Leak>,
    pub jumps: Vec<JumpRecord>,
}

impl QuantumState {
    /// All active atoms in |g>.
    pub fn ground(kind: BasisKind, n_atoms: usize, active: u64) -> Result<Self> {
        let basis = Basis::new(kind, n_atoms, active, DEFAULT_STATE_BUDGET)?;
        let mut amplitudes = vec![Complex64::default(); basis.len()];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(Self { basis, amplitudes, leaked: vec![Leak::None; n_atoms], jumps: Vec::new() })
    }

    pub fn from_amplitudes(basis: Basis, amplitudes: Vec<Complex64>) -> Result<Self> {
        if basis.len() != amplitudes.len() {
            return domain("amplitude count does not match basis");
        }
        let n = basis.n_atoms();
        Ok(Self { basis, amplitudes, leaked: vec![Leak::None; n], jumps: Vec::new() })
    }

    pub fn n_atoms(&self) -> usize {
        self.basis.n_atoms()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) {
        let n = self.norm_sqr().sqrt();
        if n > 0.0 {
            self.amplitudes.iter_mut().for_each(|a| *a /= n);
        }
    }

    pub fn normalized(&self) -> Self {
        let mut s = self.clone();
        s.normalize();
        s
    }

    /// Probability weight of configuration `mask` (0 if outside the basis).
    pub fn probability(&self, mask: u64) -> f64 {
        self.basis.index_of(mask).map_or(0.0, |i| self.amplitudes[i].norm_sqr())
    }

    pub fn amplitude(&self, mask: u64) -> Complex64 {
        self.basis.index_of(mask).map_or(Complex64::default(), |i| self.amplitudes[i])
    }

    /// `<n_i>` for every site, relative to the current norm.
    pub fn rydberg_populations(&self) -> Vec<f64> {
        let n = self.n_atoms();
        let mut pop = vec![0.0; n];
        for (&s, a) in self.basis.states().iter().zip(&self.amplitudes) {
            let p = a.norm_sqr();
            for (i, slot) in pop.iter_mut().enumerate() {
                if s & site_bit(n, i) != 0 {
                    *slot += p;
                }
            }
        }
        let norm = self.norm_sqr();
        if norm > 0.0 {
            pop.iter_mut().for_each(|p| *p /= norm);
        }
        pop
    }

    /// Sample a configuration from `|amplitude|^2` (bit set = Rydberg).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let total = self.norm_sqr();
        let mut u = rng.random::<f64>() * total;
        for (&s, a) in self.basis.states().iter().zip(&self.amplitudes) {
            u -= a.norm_sqr();
            if u < 0.0 {
                return s;
            }
        }
        *self.basis.states().last().unwrap()
    }

    /// Apply `|leaked><r|` on `site`: keep the branch with the atom excited
    /// and remove the site from the active set. The result is normalized.
    pub fn collapse_leak(&mut self, site: usize, channel: DecayChannel, time: f64) -> Result<()> {
        let n = self.n_atoms();
        let bit = site_bit(n, site);
        if !self.basis.is_active(site) {
            return domain(format!("site {site} is not active"));
        }
        let basis = Basis::new(self.basis.kind(), n, self.basis.active_mask() & !bit, DEFAULT_STATE_BUDGET)?;
        let mut amps = vec![Complex64::default(); basis.len()];
        for (&s, &a) in self.basis.states().iter().zip(&self.amplitudes) {
            if s & bit != 0 {
                if let Some(j) = basis.index_of(s & !bit) {
                    amps[j] = a;
                }
            }
        }
        self.basis = basis;
        self.amplitudes = amps;
        self.normalize();
        self.leaked[site] = match channel {
            DecayChannel::Bright => Leak::Bright,
            DecayChannel::Dark => Leak::Dark,
        };
        self.jumps.push(JumpRecord { time, site, channel });
        Ok(())
    }
}
