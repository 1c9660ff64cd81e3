//! Simulation and analysis toolkit for erasure-converted Rydberg arrays.
//!
//! * [`lattice`]: chain geometry, drive schedules, bases and Hamiltonian terms.
//! * [`dynamics`]: unitary and quantum-jump evolution with laser noise.
//! * [`imaging`]: erasure and final images, shot records, excision.
//! * [`bell`]: Bell-state fidelity lower bound with Beta-aware fitting.
//! * [`analysis`]: many-body observables on shot batches.
//! * [`oracle`]: perturbative and dense reference calculations.
//! * [`experiment`]: configuration files and end-to-end campaigns.

pub mod error;
pub mod lattice;
pub mod rng;
pub mod units;
pub mod dynamics;
pub mod imaging;
pub mod bell;
pub mod analysis;
pub mod oracle;
pub mod experiment;

pub use error::{Error, Result};
