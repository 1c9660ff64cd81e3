use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::dynamics::{DecayRates, Leak, QuantumState};
use crate::error::{domain, Result};
use crate::lattice::{site_bit, LatticeSpec, PulseSchedule};
use crate::units::angular;

type C = Complex64;

/// Per-atom levels of the dense model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level {
    Ground = 0,
    Rydberg = 1,
    Bright = 2,
    Dark = 3,
}

pub const LEVELS: usize = 4;
/// Largest chain the dense model accepts.
pub const MAX_LINDBLAD_ATOMS: usize = 4;

fn level_of(index: usize, n: usize, site: usize) -> usize {
    (index / LEVELS.pow((n - 1 - site) as u32)) % LEVELS
}

fn with_level(index: usize, n: usize, site: usize, level: usize) -> usize {
    let p = LEVELS.pow((n - 1 - site) as u32);
    index - level_of(index, n, site) * p + level * p
}

#[derive(Clone, Copy, Debug)]
enum Rate {
    Bright,
    Dark,
    Photo,
    Dephasing,
}

struct Terms {
    drive: Vec<(usize, usize)>,
    interaction: Vec<f64>,
    rydberg: Vec<Vec<usize>>,
    jumps: Vec<(Rate, Vec<(usize, usize)>)>,
}

/// Dense master-equation model on `4^N` states per atom chain.
///
/// Jump operators: `sqrt(G_b)|B><r|`, `sqrt(G_d)|D><r|`, photo-ionization
/// `sqrt(k Omega^2)|D><B|` and optional pure dephasing `sqrt(g_phi) n_r`.
/// Static errors: global Rabi scale and per-atom detuning offsets.
#[derive(Clone, Debug)]
pub struct LindbladModel {
    pub lattice: LatticeSpec,
    pub schedule: PulseSchedule,
    pub rates: DecayRates,
    pub dephasing: f64,
    pub omega_scale: f64,
    pub detuning_offsets: Vec<f64>,
}

impl LindbladModel {
    pub fn new(lattice: LatticeSpec, schedule: PulseSchedule, rates: DecayRates) -> Result<Self> {
        if lattice.n_atoms > MAX_LINDBLAD_ATOMS {
            return domain(format!("dense Lindblad model supports at most {MAX_LINDBLAD_ATOMS} atoms"));
        }
        let n = lattice.n_atoms;
        Ok(Self { lattice, schedule, rates, dephasing: 0.0, omega_scale: 1.0, detuning_offsets: vec![0.0; n] })
    }

    pub fn dim(&self) -> usize {
        LEVELS.pow(self.lattice.n_atoms as u32)
    }

    /// Drive pairs `(flipped, idx)`, interaction energy (rad/us) and the
    /// Rydberg sites of every product state, plus the jump maps.
    fn terms(&self) -> Terms {
        let n = self.lattice.n_atoms;
        let d = self.dim();
        let mut drive = Vec::new();
        let mut interaction = vec![0.0; d];
        let mut rydberg = vec![Vec::new(); d];
        for idx in 0..d {
            for i in 0..n {
                let li = level_of(idx, n, i);
                if li == Level::Rydberg as usize {
                    rydberg[idx].push(i);
                    for j in i + 1..n {
                        if level_of(idx, n, j) == Level::Rydberg as usize {
                            interaction[idx] += angular(self.lattice.pair_mhz(i, j));
                        }
                    }
                }
                if li <= 1 {
                    drive.push((with_level(idx, n, i, 1 - li), idx));
                }
            }
        }
        Terms { drive, interaction, rydberg, jumps: self.jump_maps() }
    }

    /// Jump operators as `(rate_kind, from -> to)` maps over product states;
    /// each column of a jump operator holds at most one entry.
    fn jump_maps(&self) -> Vec<(Rate, Vec<(usize, usize)>)> {
        let n = self.lattice.n_atoms;
        let d = self.dim();
        let mut out = Vec::new();
        for i in 0..n {
            for (rate, from, to) in [
                (Rate::Bright, Level::Rydberg, Level::Bright),
                (Rate::Dark, Level::Rydberg, Level::Dark),
                (Rate::Photo, Level::Bright, Level::Dark),
                (Rate::Dephasing, Level::Rydberg, Level::Rydberg),
            ] {
                let map = (0..d)
                    .filter(|&idx| level_of(idx, n, i) == from as usize)
                    .map(|idx| (idx, with_level(idx, n, i, to as usize)))
                    .collect();
                out.push((rate, map));
            }
        }
        out
    }

    fn rate(&self, kind: Rate, t: f64) -> f64 {
        match kind {
            Rate::Bright => self.rates.bright,
            Rate::Dark => self.rates.dark,
            Rate::Photo => self.rates.photoionization * (self.schedule.rabi(t) * self.omega_scale).powi(2),
            Rate::Dephasing => self.dephasing,
        }
    }

    fn derivative(&self, terms: &Terms, t: f64, rho: &DMatrix<C>) -> DMatrix<C> {
        let d = self.dim();
        let half_omega = 0.5 * angular(self.schedule.rabi(t) * self.omega_scale);
        let delta = self.schedule.detuning(t);
        let energy: Vec<f64> = (0..d)
            .map(|idx| {
                terms.interaction[idx]
                    - terms.rydberg[idx].iter().map(|&i| angular(delta + self.detuning_offsets[i])).sum::<f64>()
            })
            .collect();
        // -i [H, rho] with H = diag(energy) + half_omega * sum |flipped><idx|
        let mut out = DMatrix::from_fn(d, d, |a, b| rho[(a, b)] * C::new(0.0, energy[b] - energy[a]));
        let mi = C::new(0.0, -half_omega);
        for &(row, col) in &terms.drive {
            for b in 0..d {
                out[(row, b)] += mi * rho[(col, b)];
                out[(b, col)] -= mi * rho[(b, row)];
            }
        }
        let mut loss = vec![0.0; d];
        for (kind, map) in &terms.jumps {
            let g = self.rate(*kind, t);
            if g <= 0.0 {
                continue;
            }
            for &(fa, ta) in map {
                loss[fa] += g;
                for &(fb, tb) in map {
                    out[(ta, tb)] += rho[(fa, fb)] * g;
                }
            }
        }
        for a in 0..d {
            for b in 0..d {
                out[(a, b)] -= rho[(a, b)] * (0.5 * (loss[a] + loss[b]));
            }
        }
        out
    }

    /// Ground-state density matrix.
    pub fn ground(&self) -> DMatrix<C> {
        let mut rho = DMatrix::zeros(self.dim(), self.dim());
        rho[(0, 0)] = C::new(1.0, 0.0);
        rho
    }

    /// Fixed-step RK4 from `t = 0`, returning `rho` at each checkpoint.
    pub fn evolve(&self, checkpoints: &[f64], dt: f64) -> Result<Vec<DMatrix<C>>> {
        if !(dt > 0.0) {
            return domain("dt must be positive");
        }
        let terms = self.terms();
        let mut rho = self.ground();
        let mut t = 0.0;
        let mut out = Vec::with_capacity(checkpoints.len());
        for &stop in checkpoints {
            if stop < t {
                return domain("checkpoints must be sorted");
            }
            let steps = ((stop - t) / dt).ceil() as usize;
            let h = if steps > 0 { (stop - t) / steps as f64 } else { 0.0 };
            for _ in 0..steps {
                let hc = C::new(h, 0.0);
                let k1 = self.derivative(&terms, t, &rho);
                let k2 = self.derivative(&terms, t + 0.5 * h, &(&rho + &k1 * (hc * 0.5)));
                let k3 = self.derivative(&terms, t + 0.5 * h, &(&rho + &k2 * (hc * 0.5)));
                let k4 = self.derivative(&terms, t + h, &(&rho + &k3 * hc));
                rho += (k1 + k2 * C::new(2.0, 0.0) + k3 * C::new(2.0, 0.0) + k4) * (hc / 6.0);
                t += h;
            }
            t = stop;
            out.push(rho.clone());
        }
        Ok(out)
    }
}

/// Map a trajectory state into the `4^N` level space.
pub fn embed_state(state: &QuantumState) -> DVector<C> {
    let n = state.n_atoms();
    let mut v = DVector::zeros(LEVELS.pow(n as u32));
    for (&s, &a) in state.basis.states().iter().zip(&state.amplitudes) {
        let mut idx = 0;
        for i in 0..n {
            let level = match state.leaked[i] {
                Leak::Bright => Level::Bright,
                Leak::Dark => Level::Dark,
                Leak::None if s & site_bit(n, i) != 0 => Level::Rydberg,
                Leak::None => Level::Ground,
            };
            idx = idx * LEVELS + level as usize;
        }
        v[idx] += a;
    }
    v
}

/// Two-outcome readout distribution over `2^N` bitstrings (bit set = read
/// as Rydberg). Leaked atoms read as Rydberg; entries follow bitstring order.
pub fn readout_populations(rho: &DMatrix<C>, n: usize) -> Vec<f64> {
    let mut p = vec![0.0; 1 << n];
    for idx in 0..rho.nrows() {
        let mut mask = 0u64;
        for i in 0..n {
            if level_of(idx, n, i) != Level::Ground as usize {
                mask |= site_bit(n, i);
            }
        }
        p[mask as usize] += rho[(idx, idx)].re;
    }
    p
}

/// `(1/2) sum |eig(a - b)|` for Hermitian `a`, `b`.
pub fn trace_distance(a: &DMatrix<C>, b: &DMatrix<C>) -> f64 {
    let d = a - b;
    let d = (&d + d.adjoint()) * C::new(0.5, 0.0);
    let eig = nalgebra::SymmetricEigen::new(d);
    0.5 * eig.eigenvalues.iter().map(|x| x.abs()).sum::<f64>()
}
