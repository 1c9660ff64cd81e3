use std::collections::HashMap;
use std::ops::Deref;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use rand::Rng;

use super::integrator::{Dopri5, StepControl};
use super::krylov::{DriveOperator, Magnus4};
use super::noise::{DecayRates, NoiseTraces, ShotNoise};
use super::state::{DecayChannel, Leak, QuantumState};
use crate::error::{domain, Result};
use crate::lattice::{Basis, BasisKind, HamiltonianTerms, LatticeSpec, PulseSchedule};
use crate::units::angular;

type C = Complex64;

/// Squared norm below which a trajectory is declared invalid.
pub const NORM_UNDERFLOW: f64 = 1e-12;

/// Time-stepping scheme.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    /// Adaptive Dormand-Prince 5(4) controlled by `StepControl`.
    Dopri5,
    /// Fourth-order commutator-free Magnus with Krylov exponentials, fixed
    /// step `max_step` (µs). The Krylov error is held below the step tolerance.
    Magnus { max_step: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvolveOptions {
    pub method: Method,
    pub step: StepControl,
    /// Subtract a time-dependent energy offset to shrink the spectral radius.
    /// Only the global phase of the state depends on this.
    pub center_energy: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { method: Method::Dopri5, step: StepControl::default(), center_energy: true }
    }
}

impl EvolveOptions {
    pub fn with_tolerance(tolerance: f64) -> Self {
        Self { step: StepControl { tolerance, ..StepControl::default() }, ..Self::default() }
    }

    pub fn magnus(max_step: f64) -> Self {
        Self { method: Method::Magnus { max_step }, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step.tolerance > 0.0) {
            return domain("step tolerance must be positive");
        }
        if let Method::Magnus { max_step } = self.method {
            if !(max_step > 0.0 && max_step.is_finite()) {
                return domain("Magnus step must be positive and finite");
            }
        }
        Ok(())
    }
}

/// Either stepper behind one interface.
enum Stepper {
    Dopri(Dopri5),
    Magnus(Magnus4),
}

impl Stepper {
    fn new(dim: usize, options: &EvolveOptions) -> Self {
        match options.method {
            Method::Dopri5 => Stepper::Dopri(Dopri5::new(dim)),
            Method::Magnus { max_step } => Stepper::Magnus(Magnus4::new(dim, max_step, options.step.tolerance)),
        }
    }

    fn reset(&mut self, dim: usize) {
        match self {
            Stepper::Dopri(rk) => rk.reset(dim),
            Stepper::Magnus(m) => m.reset(dim),
        }
    }

    fn steps(&self) -> usize {
        match self {
            Stepper::Dopri(rk) => rk.accepted,
            Stepper::Magnus(m) => m.accepted,
        }
    }

    fn advance(&mut self, gen: &Generator, t: f64, y: &mut [C], t_limit: f64, ctl: &StepControl) -> Result<f64> {
        match self {
            Stepper::Dopri(rk) => rk.advance(&mut |a, b, c| gen.rhs(a, b, c), t, y, t_limit, ctl),
            Stepper::Magnus(m) => m.advance(gen, t, y, t_limit),
        }
    }

    fn integrate(&mut self, gen: &Generator, t0: f64, t1: f64, y: &mut [C], ctl: &StepControl) -> Result<()> {
        match self {
            Stepper::Dopri(rk) => rk.integrate(&mut |a, b, c| gen.rhs(a, b, c), t0, t1, y, ctl),
            Stepper::Magnus(m) => m.integrate(gen, t0, t1, y),
        }
    }
}

/// Hamiltonian terms per active-site mask, built once and shared.
pub struct TermsCache {
    lattice: LatticeSpec,
    kind: BasisKind,
    map: Mutex<HashMap<u64, Arc<HamiltonianTerms>>>,
}

impl TermsCache {
    pub fn new(lattice: LatticeSpec, kind: BasisKind) -> Self {
        Self { lattice, kind, map: Mutex::new(HashMap::new()) }
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }
    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn get(&self, active: u64) -> Result<Arc<HamiltonianTerms>> {
        if let Some(t) = self.map.lock().unwrap().get(&active) {
            return Ok(t.clone());
        }
        let basis = Basis::new(self.kind, self.lattice.n_atoms, active, crate::lattice::DEFAULT_STATE_BUDGET)?;
        let terms = Arc::new(HamiltonianTerms::build(&self.lattice, basis)?);
        Ok(self.map.lock().unwrap().entry(active).or_insert(terms).clone())
    }
}

enum Terms<'a> {
    Borrowed(&'a HamiltonianTerms),
    Shared(Arc<HamiltonianTerms>),
}

impl Deref for Terms<'_> {
    type Target = HamiltonianTerms;
    fn deref(&self) -> &HamiltonianTerms {
        match self {
            Terms::Borrowed(t) => t,
            Terms::Shared(t) => t,
        }
    }
}

/// Right-hand side `-i H_eff(t) psi` for one basis and noise realization,
/// with `H_eff = H - (i/2) Gamma sum_i n_i`.
struct Generator<'a> {
    terms: Terms<'a>,
    coupling: Vec<f64>,
    diag_static: Vec<f64>,
    decay_half: f64,
    schedule: &'a PulseSchedule,
    omega_scale: f64,
    traces: Option<&'a NoiseTraces>,
    n_max: f64,
    static_mid: f64,
    center: bool,
}

impl<'a> Generator<'a> {
    fn new(
        terms: Terms<'a>,
        lattice: &LatticeSpec,
        noise: Option<&'a ShotNoise>,
        schedule: &'a PulseSchedule,
        decay_total: f64,
        center: bool,
    ) -> Self {
        let (_, _, sites) = terms.csr();
        let n = lattice.n_atoms;
        let (coupling, diag_static, omega_scale, traces) = match noise {
            None => (vec![1.0; sites.len()], terms.interaction_diag().to_vec(), 1.0, None),
            Some(nz) => {
                let coupling = sites.iter().map(|&s| nz.site_rabi[s as usize]).collect();
                let moved = nz.positions.iter().any(|p| *p != [0.0; 3]);
                let mut diag = if moved {
                    terms.interaction_with(lattice, |i, j| nz.pair_scale(lattice.spacing, i, j))
                } else {
                    terms.interaction_diag().to_vec()
                };
                if nz.detuning_offsets.iter().any(|&d| d != 0.0) {
                    for (d, &s) in diag.iter_mut().zip(terms.basis().states()) {
                        for i in 0..n {
                            if s & crate::lattice::site_bit(n, i) != 0 {
                                *d -= angular(nz.detuning_offsets[i]);
                            }
                        }
                    }
                }
                let traces = (!nz.traces.is_empty()).then_some(&nz.traces);
                (coupling, diag, nz.omega_scale, traces)
            }
        };
        let lo = diag_static.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = diag_static.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let n_max = terms.number_diag().iter().copied().fold(0.0, f64::max);
        Self {
            terms,
            coupling,
            diag_static,
            decay_half: 0.5 * decay_total,
            schedule,
            omega_scale,
            traces,
            n_max,
            static_mid: 0.5 * (lo + hi),
            center,
        }
    }

    /// Angular Rabi frequency and detuning at `t`.
    #[inline]
    fn drive_at(&self, t: f64) -> (f64, f64) {
        let mut omega = self.schedule.rabi(t) * self.omega_scale;
        let mut delta = self.schedule.detuning(t);
        if let Some(tr) = self.traces {
            omega *= (1.0 + tr.intensity_at(t)).max(0.0).sqrt();
            delta += tr.detuning_at(t);
        }
        (angular(omega), angular(delta))
    }

    fn apply_at(&self, omega: f64, delta: f64, psi: &[C], out: &mut [C]) {
        let half = 0.5 * omega;
        let offset = if self.center { self.static_mid - 0.5 * delta * self.n_max } else { 0.0 };
        let (rows, cols, _) = self.terms.csr();
        let counts = self.terms.number_diag();
        for r in 0..psi.len() {
            let d = self.diag_static[r] - delta * counts[r] - offset;
            let mut h = psi[r] * d;
            for e in rows[r]..rows[r + 1] {
                h += psi[cols[e] as usize] * (half * self.coupling[e]);
            }
            out[r] = C::new(h.im, -h.re) - psi[r] * (self.decay_half * counts[r]);
        }
    }

    fn rhs(&self, t: f64, psi: &[C], out: &mut [C]) {
        let (omega, delta) = self.drive_at(t);
        self.apply_at(omega, delta, psi, out);
    }
}

impl DriveOperator for Generator<'_> {
    fn drive(&self, t: f64) -> (f64, f64) {
        self.drive_at(t)
    }
    fn apply(&self, omega: f64, delta: f64, psi: &[C], out: &mut [C]) {
        self.apply_at(omega, delta, psi, out)
    }
}

fn norm_sqr(v: &[C]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

fn check_stops(t0: f64, stops: &[f64]) -> Result<()> {
    if stops.iter().any(|&t| !(t >= t0) || !t.is_finite()) || stops.windows(2).any(|w| w[1] < w[0]) {
        return domain("checkpoints must be finite, sorted and not before the start time");
    }
    Ok(())
}

/// Coherent evolution from `t0` to `t1` under the noiseless Hamiltonian.
pub fn evolve_unitary_between(
    state: &QuantumState,
    terms: &HamiltonianTerms,
    lattice: &LatticeSpec,
    schedule: &PulseSchedule,
    t0: f64,
    t1: f64,
    options: &EvolveOptions,
) -> Result<QuantumState> {
    if terms.basis() != &state.basis {
        return domain("state and Hamiltonian use different bases");
    }
    check_stops(t0, &[t1])?;
    options.validate()?;
    let gen = Generator::new(Terms::Borrowed(terms), lattice, None, schedule, 0.0, options.center_energy);
    let mut out = state.clone();
    let mut stepper = Stepper::new(out.amplitudes.len(), options);
    stepper.integrate(&gen, t0, t1, &mut out.amplitudes, &options.step)?;
    Ok(out)
}

/// Coherent evolution over the whole schedule.
pub fn evolve_unitary(
    state: &QuantumState,
    terms: &HamiltonianTerms,
    lattice: &LatticeSpec,
    schedule: &PulseSchedule,
    options: &EvolveOptions,
) -> Result<QuantumState> {
    evolve_unitary_between(state, terms, lattice, schedule, 0.0, schedule.duration, options)
}

/// Everything a stochastic trajectory needs besides its random stream.
pub struct TrajectorySystem<'a> {
    pub cache: &'a TermsCache,
    pub schedule: &'a PulseSchedule,
    pub noise: &'a ShotNoise,
    pub rates: DecayRates,
    pub options: EvolveOptions,
}

/// Result of a trajectory: one state per checkpoint.
#[derive(Clone, Debug)]
pub struct TrajectoryOutcome {
    /// Normalized states; leak labels reflect photo-ionization up to each checkpoint.
    pub snapshots: Vec<QuantumState>,
    pub valid: bool,
    pub steps: usize,
}

/// Trajectory evaluated with one conditioned jump branch.
///
/// The ensemble average of `|psi~><psi~|` (unnormalized no-jump part) plus
/// `branch_weight |phi><phi|` (when the branch exists at that checkpoint)
/// has the same expectation as plain jump sampling but resolves rare decays.
#[derive(Clone, Debug)]
pub struct BranchedOutcome {
    pub no_jump: Vec<QuantumState>,
    pub branch_weight: f64,
    pub jump_time: Option<f64>,
    pub branch: Vec<Option<QuantumState>>,
    pub valid: bool,
}

struct Pending {
    site: usize,
    since: f64,
    dose: f64,
}

/// Step-resolved record of a no-jump evolution. Norms are kept at every
/// step, amplitudes every `stride` steps (always at index 0).
struct PathRecorder {
    stride: usize,
    times: Vec<f64>,
    norms: Vec<f64>,
    stored: Vec<(usize, Vec<C>)>,
}

impl PathRecorder {
    fn new(t0: f64, amps: &[C], stride: usize) -> Self {
        Self { stride: stride.max(1), times: vec![t0], norms: vec![norm_sqr(amps)], stored: vec![(0, amps.to_vec())] }
    }

    fn push(&mut self, t: f64, amps: &[C]) {
        let idx = self.times.len();
        self.times.push(t);
        self.norms.push(norm_sqr(amps));
        if idx % self.stride == 0 {
            self.stored.push((idx, amps.to_vec()));
        }
    }

    /// First crossing of `norm^2 = u`: interpolated time plus the latest
    /// stored point before it.
    fn crossing(&self, u: f64) -> Option<(f64, &(usize, Vec<C>))> {
        let k = self.norms.iter().position(|&n| n < u)?;
        if k == 0 {
            return None;
        }
        let (na, nb) = (self.norms[k - 1], self.norms[k]);
        let (ta, tb) = (self.times[k - 1], self.times[k]);
        let frac = if nb < na { ((u / na).ln() / (nb / na).ln()).clamp(0.0, 1.0) } else { 1.0 };
        let start = self.stored.iter().rev().find(|(i, _)| *i <= k - 1)?;
        Some((ta + (tb - ta) * frac, start))
    }
}

/// Deterministic no-jump evolution from the all-ground state of one active
/// mask, reusable by every trajectory sharing that mask when the shot noise
/// is quiet.
pub struct NoJumpPath {
    start: QuantumState,
    record: PathRecorder,
    checkpoints: Vec<f64>,
    snapshots: Vec<QuantumState>,
    valid: bool,
}

impl NoJumpPath {
    pub fn checkpoints(&self) -> &[f64] {
        &self.checkpoints
    }
    /// Probability that no jump occurs before the last checkpoint.
    pub fn survival(&self) -> f64 {
        self.record.norms.last().copied().unwrap_or(1.0)
    }
}

/// No-jump paths from the all-ground state, keyed by active mask.
#[derive(Default)]
pub struct PathCache {
    map: Mutex<HashMap<u64, Arc<NoJumpPath>>>,
}

impl PathCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Path for `active`, recorded with `system` on first use. The system's
    /// noise must be the same for every caller.
    pub fn get(&self, system: &TrajectorySystem, active: u64, checkpoints: &[f64]) -> Result<Arc<NoJumpPath>> {
        if let Some(p) = self.map.lock().unwrap().get(&active) {
            return Ok(p.clone());
        }
        let lattice = system.cache.lattice();
        let state = QuantumState::ground(system.cache.kind(), lattice.n_atoms, active)?;
        let path = Arc::new(system.no_jump_path(state, checkpoints)?);
        Ok(self.map.lock().unwrap().entry(active).or_insert(path).clone())
    }
}

/// Stored amplitudes per recorded no-jump path.
const PATH_STRIDE: usize = 8;

impl<'a> TrajectorySystem<'a> {
    fn generator(&self, basis: &Basis) -> Result<Generator<'a>> {
        let terms = self.cache.get(basis.active_mask())?;
        Ok(Generator::new(
            Terms::Shared(terms),
            self.cache.lattice(),
            Some(self.noise),
            self.schedule,
            self.rates.total(),
            self.options.center_energy,
        ))
    }

    fn jump<R: Rng + ?Sized>(&self, state: &mut QuantumState, t: f64, rng: &mut R, pending: &mut Vec<Pending>) -> Result<()> {
        let pops = state.rydberg_populations();
        let total: f64 = pops.iter().sum();
        if !(total > 0.0) {
            return domain("jump requested with no Rydberg population");
        }
        let mut u = rng.random::<f64>() * total;
        let mut site = pops.len() - 1;
        for (i, p) in pops.iter().enumerate() {
            u -= p;
            if u < 0.0 && *p > 0.0 {
                site = i;
                break;
            }
        }
        let channel = if rng.random::<f64>() * self.rates.total() < self.rates.bright {
            DecayChannel::Bright
        } else {
            DecayChannel::Dark
        };
        state.collapse_leak(site, channel, t)?;
        if channel == DecayChannel::Bright && self.rates.photoionization > 0.0 {
            let dose = -(1.0 - rng.random::<f64>()).ln();
            pending.push(Pending { site, since: t, dose });
        }
        Ok(())
    }

    fn resolve(&self, state: &QuantumState, pending: &[Pending], t: f64, normalize: bool) -> QuantumState {
        let mut s = if normalize { state.normalized() } else { state.clone() };
        for p in pending {
            let scale2 = self.noise.omega_scale.powi(2);
            let exposure = self.rates.photoionization * scale2 * self.schedule.rabi_squared_integral(p.since, t);
            if exposure >= p.dose {
                s.leaked[p.site] = Leak::Dark;
            }
        }
        s
    }

    /// Integrate through `stops`, snapshotting at each. With `rng`, quantum
    /// jumps are sampled; otherwise the unnormalized no-jump state is kept.
    #[allow(clippy::too_many_arguments)]
    fn drive<R: Rng + ?Sized>(
        &self,
        state: &mut QuantumState,
        t_start: f64,
        stops: &[f64],
        mut rng: Option<&mut R>,
        mut path: Option<&mut PathRecorder>,
        pending: &mut Vec<Pending>,
        snapshots: &mut Vec<QuantumState>,
    ) -> Result<(bool, usize)> {
        let mut gen = self.generator(&state.basis)?;
        let mut rk = Stepper::new(state.amplitudes.len(), &self.options);
        let ctl = self.options.step;
        let decays = self.rates.total() > 0.0;
        let mut threshold = match (&mut rng, decays) {
            (Some(r), true) => Some(r.random::<f64>()),
            _ => None,
        };
        let mut t = t_start;
        let mut prev = Vec::new();
        for &stop in stops {
            while t < stop {
                let t_prev = t;
                let n_prev = norm_sqr(&state.amplitudes);
                if threshold.is_some() {
                    prev.clone_from(&state.amplitudes);
                }
                t = rk.advance(&gen, t, &mut state.amplitudes, stop, &ctl)?;
                let n2 = norm_sqr(&state.amplitudes);
                if let Some(p) = path.as_deref_mut() {
                    p.push(t, &state.amplitudes);
                }
                if !(n2 >= NORM_UNDERFLOW) {
                    return Ok((false, rk.steps()));
                }
                if let (Some(u), Some(r)) = (threshold, rng.as_deref_mut()) {
                    if n2 < u {
                        let frac = ((u / n_prev).ln() / (n2 / n_prev).ln()).clamp(0.0, 1.0);
                        let tau = t_prev + (t - t_prev) * frac;
                        state.amplitudes.clone_from(&prev);
                        rk.reset(state.amplitudes.len());
                        rk.integrate(&gen, t_prev, tau, &mut state.amplitudes, &ctl)?;
                        self.jump(state, tau, r, pending)?;
                        gen = self.generator(&state.basis)?;
                        rk.reset(state.amplitudes.len());
                        threshold = Some(r.random::<f64>());
                        t = tau;
                    }
                }
            }
            snapshots.push(self.resolve(state, pending, stop, rng.is_some()));
        }
        Ok((true, rk.steps()))
    }

    /// Quantum-jump trajectory from `state` at `t = 0` through `checkpoints`.
    pub fn run<R: Rng + ?Sized>(&self, state: QuantumState, checkpoints: &[f64], rng: &mut R) -> Result<TrajectoryOutcome> {
        check_stops(0.0, checkpoints)?;
        let mut state = state;
        state.normalize();
        let mut snapshots = Vec::with_capacity(checkpoints.len());
        let (valid, steps) =
            self.drive(&mut state, 0.0, checkpoints, Some(rng), None, &mut Vec::new(), &mut snapshots)?;
        Ok(TrajectoryOutcome { snapshots, valid, steps })
    }

    /// Re-integrate from the stored point before the crossing of `u`, apply
    /// the jump and return the post-jump state and time.
    fn branch_at<R: Rng + ?Sized>(
        &self,
        start: &QuantumState,
        record: &PathRecorder,
        u: f64,
        rng: &mut R,
        pending: &mut Vec<Pending>,
    ) -> Result<Option<(QuantumState, f64)>> {
        let Some((tau, (idx, amps))) = record.crossing(u) else {
            return Ok(None);
        };
        let mut branch = QuantumState { amplitudes: amps.clone(), ..start.clone() };
        let gen = self.generator(&branch.basis)?;
        let mut rk = Stepper::new(branch.amplitudes.len(), &self.options);
        rk.integrate(&gen, record.times[*idx], tau, &mut branch.amplitudes, &self.options.step)?;
        self.jump(&mut branch, tau, rng, pending)?;
        Ok(Some((branch, tau)))
    }

    /// Record the no-jump evolution of `state` through `checkpoints`.
    pub fn no_jump_path(&self, state: QuantumState, checkpoints: &[f64]) -> Result<NoJumpPath> {
        check_stops(0.0, checkpoints)?;
        let mut nj = state;
        nj.normalize();
        let start = nj.clone();
        let mut record = PathRecorder::new(0.0, &nj.amplitudes, PATH_STRIDE);
        let mut snapshots = Vec::with_capacity(checkpoints.len());
        let (valid, _) =
            self.drive::<rand_chacha::ChaCha8Rng>(&mut nj, 0.0, checkpoints, None, Some(&mut record), &mut Vec::new(), &mut snapshots)?;
        Ok(NoJumpPath { start, record, checkpoints: checkpoints.to_vec(), snapshots, valid })
    }

    /// Quantum-jump trajectory that reuses a recorded no-jump path up to the
    /// first jump. Statistically equivalent to `run` from the path's start.
    pub fn run_from_path<R: Rng + ?Sized>(&self, path: &NoJumpPath, rng: &mut R) -> Result<TrajectoryOutcome> {
        let checkpoints = &path.checkpoints;
        let normalized = |k: usize| path.snapshots[k].normalized();
        if self.rates.total() == 0.0 {
            let snapshots = (0..path.snapshots.len()).map(normalized).collect();
            return Ok(TrajectoryOutcome { snapshots, valid: path.valid, steps: 0 });
        }
        let u = rng.random::<f64>();
        let mut pending = Vec::new();
        let Some((mut branch, tau)) = self.branch_at(&path.start, &path.record, u, rng, &mut pending)? else {
            let snapshots = (0..path.snapshots.len()).map(normalized).collect();
            return Ok(TrajectoryOutcome { snapshots, valid: path.valid, steps: 0 });
        };
        let first = checkpoints.partition_point(|&c| c < tau);
        let mut snapshots: Vec<QuantumState> = (0..first).map(normalized).collect();
        let (valid, steps) =
            self.drive(&mut branch, tau, &checkpoints[first..], Some(rng), None, &mut pending, &mut snapshots)?;
        Ok(TrajectoryOutcome { snapshots, valid, steps })
    }

    /// No-jump evolution plus one jump branch sampled conditionally on a
    /// jump occurring before the last checkpoint.
    pub fn run_branched<R: Rng + ?Sized>(
        &self,
        state: QuantumState,
        checkpoints: &[f64],
        rng: &mut R,
    ) -> Result<BranchedOutcome> {
        let path = self.no_jump_path(state, checkpoints)?;
        let n_end = path.survival();
        let weight = 1.0 - n_end;
        let mut out = BranchedOutcome {
            no_jump: path.snapshots,
            branch_weight: 0.0,
            jump_time: None,
            branch: vec![None; checkpoints.len()],
            valid: path.valid,
        };
        if !path.valid || !(weight > 1e-15) || self.rates.total() == 0.0 {
            return Ok(out);
        }
        let u = n_end + weight * rng.random::<f64>();
        let mut pending = Vec::new();
        let Some((mut branch, tau)) = self.branch_at(&path.start, &path.record, u, rng, &mut pending)? else {
            return Ok(out);
        };
        let first = checkpoints.partition_point(|&c| c < tau);
        let mut snaps = Vec::new();
        let (bvalid, _) =
            self.drive(&mut branch, tau, &checkpoints[first..], Some(rng), None, &mut pending, &mut snaps)?;
        out.branch_weight = weight;
        out.jump_time = Some(tau);
        out.valid = bvalid;
        for (slot, s) in out.branch[first..].iter_mut().zip(snaps) {
            *slot = Some(s);
        }
        Ok(out)
    }
}
