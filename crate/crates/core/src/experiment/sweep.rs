use super::config::ExperimentConfig;
use crate::dynamics::{par_map_indexed, EnsembleSpec};
use crate::error::{Error, Result};
use crate::imaging::{synthesize_shot, ImageSequence, ShotRecord};
use crate::lattice::{site_bit, BasisSpec};
use crate::rng::{derive_seed, rng_for, Stream};

/// Shots of a sweep campaign, one batch per checkpoint.
///
/// Shot `i` of every batch comes from the same trajectory, observed at
/// successive times, with its own measurement draw per checkpoint.
#[derive(Clone, Debug)]
pub struct SweepCampaign {
    pub checkpoints: Vec<f64>,
    pub batches: Vec<Vec<ShotRecord>>,
    pub invalid_trajectories: u64,
}

pub fn run_sweep_campaign(config: &ExperimentConfig) -> Result<SweepCampaign> {
    let sweep = config.sweep.as_ref().ok_or_else(|| Error::Config("config has no [sweep] section".into()))?;
    let lattice = config.lattice.resolve()?;
    let n = lattice.n_atoms;
    let models = config.imaging.models(ImageSequence::Sweep)?;
    let checkpoints = sweep.checkpoint_times();
    let spec = EnsembleSpec {
        lattice,
        kind: config.lattice.basis,
        schedule: sweep.schedule(),
        noise: config.noise.resolve()?,
        options: config.integrator.options()?,
        checkpoints: checkpoints.clone(),
        n_trajectories: sweep.n_shots,
        master_seed: config.seed,
    };
    let ctx = spec.context();
    let all = BasisSpec { kind: spec.kind, n_atoms: n }.build()?.active_mask();
    let keep_truth = config.imaging.keep_truth;
    let per_shot: Vec<Result<(Vec<ShotRecord>, bool)>> = par_map_indexed(sweep.n_shots, |i| {
        let mut prep = if sweep.prep_errors {
            config.preparation.sample(n, &mut rng_for(config.seed, Stream::Preparation, i))
        } else {
            0
        };
        if let Some(site) = sweep.inject_prep_error {
            prep |= site_bit(n, site);
        }
        let out = spec.simulate(&ctx, i, all & !prep)?;
        let mut sample_rng = rng_for(config.seed, Stream::Shot, i);
        let mut image_rng = rng_for(config.seed, Stream::Synthetic, i);
        let seed = derive_seed(config.seed, Stream::Shot, i);
        let shots = out
            .snapshots
            .iter()
            .map(|snap| {
                let sample = snap.sample(&mut sample_rng);
                synthesize_shot(i, seed, i, sample, &snap.leaked, prep, &models, keep_truth, &mut image_rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((shots, out.valid))
    });
    let mut batches: Vec<Vec<ShotRecord>> = vec![Vec::with_capacity(sweep.n_shots as usize); checkpoints.len()];
    let mut invalid = 0;
    for r in per_shot {
        let (shots, valid) = r?;
        invalid += u64::from(!valid);
        for (b, s) in batches.iter_mut().zip(shots) {
            b.push(s);
        }
    }
    Ok(SweepCampaign { checkpoints, batches, invalid_trajectories: invalid })
}
