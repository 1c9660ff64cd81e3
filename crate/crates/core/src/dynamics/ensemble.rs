use std::io::{self, Write};

use rayon::prelude::*;

use super::evolve::{EvolveOptions, PathCache, TermsCache, TrajectoryOutcome, TrajectorySystem};
use super::noise::{sample_shot_noise, NoiseConfig};
use super::state::{JumpRecord, Leak, QuantumState};
use crate::error::Result;
use crate::lattice::{format_bits, BasisKind, LatticeSpec, PulseSchedule};
use crate::rng::{derive_seed, rng_from_seed, Stream};

/// Map `f` over `0..n` in parallel, returning results in index order. Each
/// item must derive its randomness from its index alone.
pub fn par_map_indexed<T, F>(n: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Fixed inputs of a trajectory ensemble.
pub struct EnsembleSpec {
    pub lattice: LatticeSpec,
    pub kind: BasisKind,
    pub schedule: PulseSchedule,
    pub noise: NoiseConfig,
    pub options: EvolveOptions,
    pub checkpoints: Vec<f64>,
    pub n_trajectories: u64,
    pub master_seed: u64,
}

/// Compact per-trajectory result.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub index: u64,
    pub seed: u64,
    pub valid: bool,
    /// One sampled configuration (bit set = Rydberg) per checkpoint.
    pub samples: Vec<u64>,
    /// Leak labels at the final checkpoint.
    pub leaked: Vec<Leak>,
    pub jumps: Vec<JumpRecord>,
}

/// Shared per-ensemble caches.
pub struct EnsembleContext {
    pub terms: TermsCache,
    paths: Option<PathCache>,
}

impl EnsembleSpec {
    /// Caches for this spec. No-jump paths are shared only when the noise
    /// leaves every shot with the same Hamiltonian.
    pub fn context(&self) -> EnsembleContext {
        EnsembleContext {
            terms: TermsCache::new(self.lattice.clone(), self.kind),
            paths: self.noise.is_shot_invariant().then(PathCache::new),
        }
    }

    /// Run trajectory `index` from the all-ground state of the `active` sites.
    pub fn simulate(&self, ctx: &EnsembleContext, index: u64, active: u64) -> Result<TrajectoryOutcome> {
        let noise = sample_shot_noise(&self.noise, &self.lattice, self.master_seed, index, self.schedule.duration)?;
        let system = TrajectorySystem {
            cache: &ctx.terms,
            schedule: &self.schedule,
            noise: &noise,
            rates: self.noise.rates(),
            options: self.options,
        };
        let mut rng = rng_from_seed(derive_seed(self.master_seed, Stream::Trajectory, index));
        if let Some(paths) = &ctx.paths {
            let path = paths.get(&system, active, &self.checkpoints)?;
            return system.run_from_path(&path, &mut rng);
        }
        let state = QuantumState::ground(self.kind, self.lattice.n_atoms, active)?;
        system.run(state, &self.checkpoints, &mut rng)
    }
}

/// Run the ensemble with every site initially active.
pub fn run_ensemble(spec: &EnsembleSpec) -> Result<Vec<TrajectoryRecord>> {
    let ctx = spec.context();
    let all = crate::lattice::BasisSpec { kind: spec.kind, n_atoms: spec.lattice.n_atoms }.build()?.active_mask();
    par_map_indexed(spec.n_trajectories, |index| {
        let out = spec.simulate(&ctx, index, all)?;
        let mut rng = rng_from_seed(derive_seed(spec.master_seed, Stream::Shot, index));
        let samples = out.snapshots.iter().map(|s| s.sample(&mut rng)).collect();
        let last = out.snapshots.last();
        Ok(TrajectoryRecord {
            index,
            seed: derive_seed(spec.master_seed, Stream::Trajectory, index),
            valid: out.valid,
            samples,
            leaked: last.map(|s| s.leaked.clone()).unwrap_or_default(),
            jumps: last.map(|s| s.jumps.clone()).unwrap_or_default(),
        })
    })
    .into_iter()
    .collect()
}

/// Tab-separated ensemble table.
///
/// Columns: `trajectory`, `seed`, `valid`, one `sample_<k>` bitstring per
/// checkpoint (1 = Rydberg), `leaked` (one of `.BD` per site) and `jumps`
/// as `time:site:channel` items separated by `;`.
pub fn write_ensemble<W: Write>(records: &[TrajectoryRecord], n_atoms: usize, checkpoints: &[f64], mut w: W) -> io::Result<()> {
    write!(w, "# checkpoints_us:")?;
    for c in checkpoints {
        write!(w, " {c}")?;
    }
    writeln!(w)?;
    write!(w, "trajectory\tseed\tvalid")?;
    for k in 0..checkpoints.len() {
        write!(w, "\tsample_{k}")?;
    }
    writeln!(w, "\tleaked\tjumps")?;
    for r in records {
        write!(w, "{}\t{}\t{}", r.index, r.seed, u8::from(r.valid))?;
        for &s in &r.samples {
            write!(w, "\t{}", format_bits(s, n_atoms))?;
        }
        let leaked: String = r
            .leaked
            .iter()
            .map(|l| match l {
                Leak::None => '.',
                Leak::Bright => 'B',
                Leak::Dark => 'D',
            })
            .collect();
        let jumps: Vec<String> = r
            .jumps
            .iter()
            .map(|j| format!("{:.6}:{}:{}", j.time, j.site, if j.channel == super::DecayChannel::Bright { 'B' } else { 'D' }))
            .collect();
        writeln!(w, "\t{}\t{}", leaked, jumps.join(";"))?;
    }
    Ok(())
}
