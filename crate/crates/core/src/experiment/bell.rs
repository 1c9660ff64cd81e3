use serde::{Deserialize, Serialize};

use super::budget::{error_budget, ErrorBudget, PairSetup};
use super::config::ExperimentConfig;
use crate::bell::{pair_outcome, PopulationPoint, Window};
use crate::dynamics::{par_map_indexed, EnsembleSpec, Leak};
use crate::error::{Error, Result};
use crate::imaging::{synthesize_shot, ExcisionPolicy, ImageSequence, ShotRecord};
use crate::lattice::{BasisKind, PulseSchedule};
use crate::oracle::{exact_max_bell_fidelity, exact_two_pi_time};
use crate::rng::{derive_seed, rng_for, Stream};

/// Drive times of one Bell campaign (us).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BellTimes {
    pub t_pi: f64,
    pub t_two_pi: f64,
    /// `(time, window)` in acquisition order: the pi window, then the 2 pi window.
    pub grid: Vec<(f64, Window)>,
}

/// Evenly spaced points within `half_width * t_pi` of both target times.
pub fn bell_times(omega: f64, v: f64, points_per_window: usize, half_width: f64) -> Result<BellTimes> {
    let (_, t_pi) = exact_max_bell_fidelity(omega, v)?;
    let (_, t_two_pi) = exact_two_pi_time(omega, v)?;
    let m = points_per_window.max(2);
    let offsets = (0..m).map(|j| half_width * t_pi * (2.0 * j as f64 / (m - 1) as f64 - 1.0));
    let grid = offsets
        .clone()
        .map(|d| (t_pi + d, Window::Pi))
        .chain(offsets.map(|d| (t_two_pi + d, Window::TwoPi)))
        .collect();
    Ok(BellTimes { t_pi, t_two_pi, grid })
}

/// Shots of a Bell campaign and their population tables.
#[derive(Clone, Debug)]
pub struct BellCampaign {
    pub times: BellTimes,
    /// Shot `k * shots_per_point + s` is repetition `s` at grid point `k`.
    pub shots: Vec<ShotRecord>,
    pub invalid_trajectories: u64,
    /// Counts of every shot.
    pub raw: Vec<PopulationPoint>,
    /// Counts after dropping shots with any detected erasure.
    pub excised: Vec<PopulationPoint>,
    pub budget: Option<ErrorBudget>,
}

fn tally(times: &BellTimes, shots: &[ShotRecord], per_point: u64, policy: ExcisionPolicy) -> Vec<PopulationPoint> {
    times
        .grid
        .iter()
        .enumerate()
        .map(|(k, &(time, window))| {
            let chunk = &shots[k * per_point as usize..(k + 1) * per_point as usize];
            let mut counts = [0u64; 4];
            for s in chunk.iter().filter(|s| policy.keeps(s)) {
                counts[pair_outcome(s.e3, 2, 0, 1)] += 1;
            }
            PopulationPoint { time, counts, n_shots: counts.iter().sum(), window: Some(window) }
        })
        .collect()
}

/// Simulate every shot of the campaign. Each shot draws its preparation
/// errors, runs its own trajectory to the point's drive time, samples a
/// configuration and images it with the two-atom sequence.
pub fn run_bell_campaign(config: &ExperimentConfig) -> Result<BellCampaign> {
    let bell = config.bell.as_ref().ok_or_else(|| Error::Config("config has no [bell] section".into()))?;
    let lattice = config.lattice.resolve()?;
    if lattice.n_atoms != 2 {
        return Err(Error::Config("a Bell campaign needs n_atoms = 2".into()));
    }
    let noise = config.noise.resolve()?;
    let options = config.integrator.options()?;
    let models = config.imaging.models(ImageSequence::Bell)?;
    let v = lattice.nearest_neighbour_mhz();
    let times = bell_times(bell.omega, v, bell.points_per_window, bell.window_half_width)?;
    let per = bell.shots_per_point;
    let specs: Vec<EnsembleSpec> = times
        .grid
        .iter()
        .map(|&(t, _)| EnsembleSpec {
            lattice: lattice.clone(),
            kind: BasisKind::Full,
            schedule: PulseSchedule::resonant(bell.omega, t),
            noise: noise.clone(),
            options,
            checkpoints: vec![t],
            n_trajectories: per,
            master_seed: config.seed,
        })
        .collect();
    let contexts: Vec<_> = specs.iter().map(EnsembleSpec::context).collect();
    let total = per * specs.len() as u64;
    let keep_truth = config.imaging.keep_truth;
    let results: Vec<Result<(ShotRecord, bool)>> = par_map_indexed(total, |id| {
        let k = (id / per) as usize;
        let prep = config.preparation.sample(2, &mut rng_for(config.seed, Stream::Preparation, id));
        let active = 0b11 & !prep;
        let (sample, leaked, valid) = if active == 0 {
            (0, vec![Leak::None; 2], true)
        } else {
            let out = specs[k].simulate(&contexts[k], id, active)?;
            let snap = &out.snapshots[0];
            let mut rng = rng_for(config.seed, Stream::Shot, id);
            (snap.sample(&mut rng), snap.leaked.clone(), out.valid)
        };
        let mut rng = rng_for(config.seed, Stream::Synthetic, id);
        let shot = synthesize_shot(id, derive_seed(config.seed, Stream::Shot, id), id, sample, &leaked, prep, &models, keep_truth, &mut rng)?;
        Ok((shot, valid))
    });
    let mut shots = Vec::with_capacity(total as usize);
    let mut invalid = 0;
    for r in results {
        let (s, valid) = r?;
        invalid += u64::from(!valid);
        shots.push(s);
    }
    let raw = tally(&times, &shots, per, ExcisionPolicy::None);
    let excised = tally(&times, &shots, per, ExcisionPolicy::PrepAndDecay);
    let budget = if bell.budget_trajectories > 0 {
        let setup = PairSetup { lattice, omega: bell.omega, t_pi: times.t_pi, t_two_pi: times.t_two_pi, options };
        Some(error_budget(&setup, &noise, bell.budget_trajectories, config.seed)?)
    } else {
        None
    };
    Ok(BellCampaign { times, shots, invalid_trajectories: invalid, raw, excised, budget })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::Preset;

    #[test]
    fn grid_is_centred_on_both_times() {
        let t = bell_times(6.2, 868.0, 5, 0.1).unwrap();
        assert_eq!(t.grid.len(), 10);
        assert!((t.grid[2].0 - t.t_pi).abs() < 1e-15);
        assert!((t.grid[7].0 - t.t_two_pi).abs() < 1e-15);
        assert!(t.grid[..5].iter().all(|p| p.1 == Window::Pi));
    }

    #[test]
    fn noiseless_campaign_is_near_ideal_and_replayable() {
        let mut c = Preset::BellNoiseless.config();
        let b = c.bell.as_mut().unwrap();
        b.shots_per_point = 50;
        b.points_per_window = 3;
        b.budget_trajectories = 0;
        let a = run_bell_campaign(&c).unwrap();
        let again = run_bell_campaign(&c).unwrap();
        assert_eq!(a.shots, again.shots);
        assert_eq!(a.raw, again.raw);
        assert_eq!(a.shots.len(), 300);
        let centre = &a.excised[1];
        assert!(centre.counts[0] + centre.counts[3] <= 2, "{centre:?}");
        assert!(a.excised.iter().zip(&a.raw).all(|(e, r)| e.n_shots <= r.n_shots));
    }
}
