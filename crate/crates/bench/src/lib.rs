//! Fixtures shared by the kernel benchmarks.

use erasim_core::bell::{PopulationPoint, Window};
use erasim_core::experiment::{ExperimentConfig, NoiseProfile, Preset};
use erasim_core::lattice::{LatticeSpec, PulseSchedule, DEFAULT_C6_OVER_2PI};

pub const SPACING_UM: f64 = 2.8;

pub fn chain(n_atoms: usize) -> LatticeSpec {
    LatticeSpec::new(n_atoms, SPACING_UM).expect("positive spacing")
}

/// Desk sweep: 5.6 MHz drive, +-30 MHz detuning over 3 us.
pub fn sweep() -> PulseSchedule {
    PulseSchedule::sweep(5.6, 30.0, 3.0)
}

/// Desk sweep campaign with decay-only noise and `shots` shots at the end.
pub fn decay_sweep_config(n_atoms: usize, shots: u64) -> ExperimentConfig {
    let mut c = Preset::SweepDesk.config();
    c.lattice.n_atoms = n_atoms;
    c.lattice.c6_over_2pi = DEFAULT_C6_OVER_2PI;
    c.noise.profile = NoiseProfile::DecayOnly;
    let s = c.sweep.as_mut().expect("preset has a sweep section");
    s.n_shots = shots;
    s.checkpoints = vec![s.duration];
    c
}

/// Nine-point pi and 2 pi windows of a near-ideal pair, 2000 shots each.
pub fn bell_counts() -> Vec<PopulationPoint> {
    let (t_pi, t_two_pi, half) = (0.0570, 0.1140, 0.008);
    let mut out = Vec::new();
    for (centre, window) in [(t_pi, Window::Pi), (t_two_pi, Window::TwoPi)] {
        for i in 0..9 {
            let x = (i as f64 - 4.0) / 4.0;
            let t = centre + half * x;
            let dip = (40.0 * x * x) as u64;
            let counts = match window {
                Window::Pi => [6 + dip, 995 - dip / 2, 995 - dip / 2, 4],
                Window::TwoPi => [1992 - dip, 4 + dip / 2, 4 + dip / 2, 0],
            };
            let mut p = PopulationPoint::new(t, counts);
            p.window = Some(window);
            out.push(p);
        }
    }
    out
}
