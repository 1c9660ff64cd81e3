//! Reference calculations: perturbation theory for the blockaded pair,
//! dense spectra for gap scans and a dense Lindblad integrator.

mod gap;
mod lindblad;
mod pair;

pub use gap::{minimum_gap_scan, GapScan};
pub use lindblad::{
    embed_state, readout_populations, trace_distance, LindbladModel, Level, LEVELS,
};
pub use pair::{
    bell_fidelity_closed_form, exact_max_bell_fidelity, exact_two_pi_time, perturbative_eigen, EvenParityBlock, PerturbativeEigen,
    ETA_ACCURACY_LIMIT,
};
