//! Bell-state fidelity lower bound from blockaded Rabi oscillations of pairs.

mod beta;
mod bound;
mod counts;
mod fit;
mod sampling;

pub use beta::{fit_beta_to_samples, BetaDist, BetaFit, GUARD, MIN_FIT_SAMPLES};
pub use bound::{bell_bound, check_simplex, BoundValue, Populations, GG, GR, RG, RR, SIMPLEX_TOL};
pub use counts::{pair_outcome, read_count_table, split_windows, write_count_table, PopulationPoint, Window};
pub use fit::{
    beta_likelihood_fit, gaussian_lsq_fit, grid_posterior, joint_constrained_fit, GridPosterior, GridSpec, Marginal,
    ParamBox, QuadraticFit,
};
pub use sampling::{
    estimate_bell, lone_atom_excitation, sample_bound_distribution, sample_bound_from_counts, spam_correct_and_sample,
    window_posteriors, BellOptions, BellReport, BoundEstimate, SpamCorrection, SpamModel, WindowPosterior,
    MIN_BOUND_SAMPLES, REJECTION_WARNING,
};
