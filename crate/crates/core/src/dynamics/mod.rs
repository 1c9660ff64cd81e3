//! Unitary and quantum-jump evolution of the chain.
//!
//! Trajectories follow the non-Hermitian Hamiltonian
//! `H - (i/2) (Gamma_bright + Gamma_dark) sum_i n_i`; a jump fires when the
//! squared norm falls below a uniform threshold drawn in advance. The decaying
//! atom is chosen with probability proportional to its Rydberg population
//! and is removed from the dynamics.

mod ensemble;
mod evolve;
mod integrator;
mod krylov;
mod noise;
mod state;

pub use ensemble::{par_map_indexed, run_ensemble, write_ensemble, EnsembleContext, EnsembleSpec, TrajectoryRecord};
pub use evolve::{
    evolve_unitary, evolve_unitary_between, BranchedOutcome, EvolveOptions, Method, NoJumpPath, PathCache, TermsCache, TrajectoryOutcome,
    TrajectorySystem, NORM_UNDERFLOW,
};
pub use integrator::{Dopri5, StepControl};
pub use krylov::{DriveOperator, Krylov, Magnus4, MAX_KRYLOV_DIM};
pub use noise::{
    dark_lifetime_for_total, sample_shot_noise, synthesize_trace, DecayRates, NoiseConfig, NoiseTraces, Psd,
    ShotNoise, BRIGHT_LIFETIME_US, TOTAL_LIFETIME_US,
};
pub use state::{DecayChannel, JumpRecord, Leak, QuantumState};
