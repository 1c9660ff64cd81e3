//! End-to-end acceptance checks, one PASS/FAIL line per criterion.
//!
//! Pass criterion numbers as arguments to run a subset:
//! `cargo test -p erasim-cli --test acceptance -- 1 8`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use erasim_core::analysis::{
    afm_policy_gap, afm_probability, conditioned_magnetization_timeseries, erasure_cross_correlation,
    magnetization_histogram, Image, MagnetizationHistogram,
};
use erasim_core::bell::{bell_bound, gaussian_lsq_fit, beta_likelihood_fit, sample_bound_from_counts, BetaDist, GridSpec, ParamBox};
use erasim_core::dynamics::{
    evolve_unitary_between, par_map_indexed, DecayRates, EvolveOptions, QuantumState, ShotNoise, TermsCache,
    TrajectorySystem,
};
use erasim_core::experiment::{
    bell_times, error_budget, paper_like_noise, run_sweep_campaign, ExperimentConfig, ImagingSpec, NoiseChannel,
    NoiseProfile, PairSetup, Preset,
};
use erasim_core::imaging::{bell_imaging, manybody_imaging, ExcisionPolicy, ImagingModel};
use erasim_core::lattice::{
    spacing_for_interaction, Basis, BasisKind, BasisSpec, HamiltonianTerms, LatticeSpec, PulseSchedule,
    DEFAULT_C6_OVER_2PI,
};
use erasim_core::oracle::{
    bell_fidelity_closed_form, embed_state, minimum_gap_scan, readout_populations, trace_distance, EvenParityBlock,
    LindbladModel,
};
use erasim_core::rng::rng_from_seed;
use erasim_core::Result;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Binomial, Distribution};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

/// Golden-section maximum of `f` on `[a, b]`; returns the argument.
fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc > fd {
            (b, d, fd) = (d, c, fc);
            c = b - g * (b - a);
            fc = f(c);
        } else {
            (a, c, fc) = (c, d, fd);
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

fn pair(v: f64) -> Result<LatticeSpec> {
    LatticeSpec::new(2, spacing_for_interaction(v, DEFAULT_C6_OVER_2PI)?)
}

fn bell_fidelity(s: &QuantumState) -> f64 {
    (s.amplitude(0b01) + s.amplitude(0b10)).norm_sqr() / 2.0
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn c1_blockade() -> Result<Outcome> {
    let omega = 6.2;
    let l = pair(1e3 * omega)?;
    let v = l.nearest_neighbour_mhz();
    let terms = HamiltonianTerms::build(&l, Basis::chain(BasisKind::Full, 2)?)?;
    let psi = QuantumState::ground(BasisKind::Full, 2, 0b11)?;
    let guess = 1.0 / (2f64.sqrt() * omega);
    let sched = PulseSchedule::resonant(omega, 2.0 * guess);
    // constant drive: one Krylov exponential per step is exact
    let opts = EvolveOptions::magnus(guess);
    let p_gg = |t: f64| evolve_unitary_between(&psi, &terms, &l, &sched, 0.0, t, &opts).map_or(f64::NAN, |s| s.probability(0));
    let period = golden_max(p_gg, 0.8 * guess, 1.2 * guess, 1e-8 * guess);
    let block = EvenParityBlock::new(omega, v)?;
    let oracle = golden_max(|t| block.ground_return_at(t), 0.8 * guess, 1.2 * guess, 1e-12 * guess);
    let (f_sim, f_oracle, f_ideal) = (1.0 / period, 1.0 / oracle, 2f64.sqrt() * omega);
    let (e_ideal, e_oracle) = (f_sim / f_ideal - 1.0, f_sim / f_oracle - 1.0);
    Ok(Outcome::new(
        e_ideal.abs() <= 1e-3 && e_oracle.abs() <= 1e-3,
        format!("f = {f_sim:.6} MHz, sqrt2*Omega = {f_ideal:.6} (rel {e_ideal:+.1e}), dense 3-level {f_oracle:.6} (rel {e_oracle:+.1e})"),
    ))
}

fn c2_perturbative() -> Result<Outcome> {
    let omega = 6.2;
    let psi = QuantumState::ground(BasisKind::Full, 2, 0b11)?;
    let opts = EvolveOptions::with_tolerance(1e-12);
    let mut ln_eta = Vec::new();
    let mut ln_res = Vec::new();
    let mut infid_140 = f64::NAN;
    let mut rows = Vec::new();
    for ratio in [20.0, 50.0, 100.0, 140.0] {
        let l = pair(ratio * omega)?;
        let v = l.nearest_neighbour_mhz();
        let terms = HamiltonianTerms::build(&l, Basis::chain(BasisKind::Full, 2)?)?;
        let (closed, t0) = bell_fidelity_closed_form(omega, v)?;
        let sched = PulseSchedule::resonant(omega, 1.5 * t0);
        let fid = |t: f64| evolve_unitary_between(&psi, &terms, &l, &sched, 0.0, t, &opts).map_or(f64::NAN, |s| bell_fidelity(&s));
        let t = golden_max(fid, 0.7 * t0, 1.3 * t0, 1e-9 * t0);
        let f = fid(t);
        let residual = (f - closed).abs();
        ln_eta.push((omega / v).ln());
        ln_res.push(residual.ln());
        rows.push(format!("V/Omega={ratio}: 1-F={:.3e} res={residual:.2e}", 1.0 - f));
        if ratio == 140.0 {
            infid_140 = 1.0 - f;
        }
    }
    let s = slope(&ln_eta, &ln_res);
    Ok(Outcome::new(
        s >= 2.7 && (2e-5..=5e-5).contains(&infid_140),
        format!("slope {s:.2}; {}", rows.join("; ")),
    ))
}

fn c3_noise_budget() -> Result<Outcome> {
    let cfg = Preset::BellPaper.config();
    let lattice = cfg.lattice.resolve()?;
    let omega = cfg.bell.as_ref().expect("preset has a bell section").omega;
    let times = bell_times(omega, lattice.nearest_neighbour_mhz(), 2, 0.1)?;
    let setup = PairSetup { lattice, omega, t_pi: times.t_pi, t_two_pi: times.t_two_pi, options: cfg.integrator.options()? };
    let b = error_budget(&setup, &paper_like_noise(), 2000, cfg.seed)?;
    let get = |c| b.channel(c).unwrap_or(f64::NAN);
    let (freq, int, dark) = (get(NoiseChannel::LaserFrequency), get(NoiseChannel::LaserIntensity), get(NoiseChannel::DarkDecay));
    let others = NoiseChannel::ALL
        .into_iter()
        .filter(|c| ![NoiseChannel::LaserFrequency, NoiseChannel::LaserIntensity, NoiseChannel::DarkDecay].contains(c))
        .map(get)
        .fold(f64::NEG_INFINITY, f64::max);
    let (f, gap) = (b.full.fidelity, b.full.gap());
    let ordered = freq >= int && int >= dark && dark >= others;
    Ok(Outcome::new(
        ordered && (0.9985..=0.9997).contains(&f) && (2e-4..=1e-3).contains(&gap),
        format!(
            "infidelity freq {freq:.2e} >= int {int:.2e} >= dark {dark:.2e} >= others {others:.2e}: {ordered}; F {f:.5}, bound {:.5}, gap {gap:.1e}",
            b.full.bound
        ),
    ))
}

/// Draw `shots` outcomes from `p`.
fn multinomial<R: Rng>(p: &[f64; 4], shots: u64, rng: &mut R) -> [u64; 4] {
    let w = WeightedIndex::new(p.iter().map(|x| x.max(0.0))).expect("populations sum to one");
    let mut c = [0u64; 4];
    for _ in 0..shots {
        c[w.sample(rng)] += 1;
    }
    c
}

fn pops(rho: &DMatrix<Complex64>) -> [f64; 4] {
    let p = readout_populations(rho, 2);
    let s: f64 = p.iter().sum();
    [p[0] / s, p[1] / s, p[2] / s, p[3] / s]
}

fn c4_lower_bound() -> Result<Outcome> {
    const RUNS: u64 = 1000;
    const SHOTS: u64 = 500;
    let runs: Vec<Result<(f64, f64, bool, f64)>> = par_map_indexed(RUNS, |k| {
        let mut rng = rng_from_seed(4_000 + k);
        let omega = rng.random_range(2.0..10.0);
        let ratio = 10f64.powf(rng.random_range(1.0..2.5));
        let l = pair(ratio * omega)?;
        let v = l.nearest_neighbour_mhz();
        let (_, t_pi) = erasim_core::oracle::exact_max_bell_fidelity(omega, v)?;
        let (_, t_two_pi) = erasim_core::oracle::exact_two_pi_time(omega, v)?;
        let rates = DecayRates { bright: rng.random_range(0.0..1.0), dark: rng.random_range(0.0..1.0), photoionization: 0.0 };
        let mut model = LindbladModel::new(l, PulseSchedule::resonant(omega, t_two_pi), rates)?;
        model.dephasing = rng.random_range(0.0..2.0);
        model.omega_scale = rng.random_range(0.9..1.1);
        model.detuning_offsets = (0..2).map(|_| rng.random_range(-0.5..0.5)).collect();
        let rhos = model.evolve(&[t_pi, t_two_pi], t_two_pi / 4000.0)?;
        let r = &rhos[0];
        // |gr> and |rg> in the 4-level product space
        let fidelity = 0.5 * (r[(1, 1)].re + r[(4, 4)].re) + r[(1, 4)].re;
        let (p1, p2) = (pops(&rhos[0]), pops(&rhos[1]));
        let b = bell_bound(p1[1], p1[2], &p2)?;
        let pi_counts = multinomial(&p1, SHOTS, &mut rng);
        let two_pi_counts = multinomial(&p2, SHOTS, &mut rng);
        let est = sample_bound_from_counts(pi_counts, two_pi_counts, 10_000, 40_000 + k)?;
        Ok((fidelity, b.value, b.clipped, est.mode))
    });
    let runs: Vec<(f64, f64, bool, f64)> = runs.into_iter().collect::<Result<_>>()?;
    let violations = runs.iter().filter(|r| !r.2 && r.1 > r.0 + 1e-9).count();
    let clipped = runs.iter().filter(|r| r.2).count();
    let below = runs.iter().filter(|r| r.3 <= r.0).count();
    let frac = below as f64 / RUNS as f64;
    let min_f = runs.iter().map(|r| r.0).fold(1.0, f64::min);
    Ok(Outcome::new(
        violations == 0 && frac >= 0.97,
        format!("exact-population violations {violations}/{RUNS} ({clipped} clipped); {SHOTS}-shot mode <= F in {:.1}%; F range [{min_f:.3}, 1]", 100.0 * frac),
    ))
}

fn c5_beta_fit() -> Result<Outcome> {
    const DATASETS: u64 = 200;
    let results: Vec<Result<(bool, f64, f64)>> = par_map_indexed(DATASETS, |k| {
        let mut rng = rng_from_seed(5_000 + k);
        let (centre, half) = (0.055, 0.008);
        let p0: f64 = rng.random_range(0.990..0.999);
        let drop: f64 = rng.random_range(0.005..0.03);
        let p2 = centre + rng.random_range(-0.2..0.2) * half;
        let p1 = -drop / (half * half);
        let n: u64 = rng.random_range(200..=1000);
        let data: Vec<(f64, u64, u64)> = (0..9)
            .map(|i| {
                let t = centre - half + 2.0 * half * i as f64 / 8.0;
                let p = (p0 + p1 * (t - p2).powi(2)).clamp(0.0, 1.0);
                (t, Binomial::new(n, p).expect("probability").sample(&mut rng), n)
            })
            .collect();
        let pts: Vec<(f64, BetaDist)> = data.iter().map(|&(t, s, n)| Ok((t, BetaDist::from_counts(s, n)?))).collect::<Result<_>>()?;
        let post = beta_likelihood_fit(&pts, &ParamBox::from_data(&pts)?, &GridSpec::default())?;
        let lsq = gaussian_lsq_fit(&data)?;
        // the grid argmax is a cell centre
        Ok((post.argmax.p0 <= lsq.p0 + 0.5 * post.step(0), post.argmax.p0, lsq.p0))
    });
    let results: Vec<(bool, f64, f64)> = results.into_iter().collect::<Result<_>>()?;
    let ok = results.iter().filter(|r| r.0).count();
    let mean_diff = results.iter().map(|r| r.2 - r.1).sum::<f64>() / DATASETS as f64;
    Ok(Outcome::new(
        ok as f64 >= 0.95 * DATASETS as f64,
        format!("Beta peak <= LSQ peak in {ok}/{DATASETS}; mean LSQ - Beta {mean_diff:.1e}"),
    ))
}

/// The most probable bin on each side of `M = 0` lies at `|M| >= 1.5` and
/// outweighs every bin with `|M| < 1.5`.
fn bifurcated(h: &MagnetizationHistogram) -> bool {
    let best = |pred: &dyn Fn(f64) -> bool| {
        h.bins.iter().filter(|b| pred(b.m)).max_by(|a, b| a.probability.total_cmp(&b.probability)).map(|b| (b.m, b.probability))
    };
    let inner = h.bins.iter().filter(|b| b.m.abs() < 1.5).map(|b| b.probability).fold(0.0, f64::max);
    match (best(&|m| m > 0.0), best(&|m| m < 0.0)) {
        (Some((mp, pp)), Some((mn, pn))) => mp >= 1.5 && mn <= -1.5 && pp > inner && pn > inner,
        _ => false,
    }
}

/// Whether detuning `d` lies beyond `d_min` in the sweep direction.
fn past(d: f64, d_min: f64, sched: &PulseSchedule) -> bool {
    (d - d_min) * (sched.detuning(sched.duration) - sched.detuning(0.0)).signum() > 0.0
}

fn c6_sweep_order() -> Result<Outcome> {
    let cfg = Preset::SweepDesk.config();
    let sweep = cfg.sweep.clone().expect("preset has a sweep section");
    let n = cfg.lattice.n_atoms;
    let camp = run_sweep_campaign(&cfg)?;
    let last = camp.batches.last().expect("checkpoints");
    let strict = afm_policy_gap(last, n, ExcisionPolicy::PrepAndDecay, ExcisionPolicy::PrepOnly)?;
    let loose = afm_policy_gap(last, n, ExcisionPolicy::PrepOnly, ExcisionPolicy::None)?;
    let p = |pol| afm_probability(last, n, pol).map(|r| r.value);
    let (pd, po, pn) = (p(ExcisionPolicy::PrepAndDecay)?, p(ExcisionPolicy::PrepOnly)?, p(ExcisionPolicy::None)?);
    let order = pd >= po && po >= pn && strict.z() > 2.0 && loose.z() > 2.0;

    let noiseless = run_sweep_campaign(&Preset::SweepNoiseless.config())?;
    let slow = afm_probability(noiseless.batches.last().expect("final checkpoint"), n, ExcisionPolicy::PrepAndDecay)?.value;

    let sched = sweep.schedule();
    let gap = minimum_gap_scan(&cfg.lattice.resolve()?, sweep.omega_max, -sweep.delta_max, sweep.delta_max, 121)?;
    let mut hist_ok = true;
    let mut marks = Vec::new();
    let mut seen_before = false;
    for (t, batch) in camp.checkpoints.iter().zip(&camp.batches) {
        let d = sched.detuning(*t);
        let bif = bifurcated(&magnetization_histogram(batch, n, ExcisionPolicy::PrepAndDecay)?);
        let beyond = past(d, gap.min_delta(), &sched);
        seen_before |= !beyond;
        if !beyond && bif {
            hist_ok = false;
        }
        marks.push(format!("t={t}{}{}", if beyond { ">" } else { "<" }, if bif { "B" } else { "-" }));
    }
    let final_bif = marks.last().is_some_and(|m| m.ends_with('B'));
    hist_ok &= final_bif && seen_before;
    Ok(Outcome::new(
        order && slow >= 0.9 && hist_ok,
        format!(
            "P_AFM {pd:.3} >= {po:.3} >= {pn:.3} (z {:.1}, {:.1}); noiseless slow sweep {slow:.3}; min gap at {:.2} MHz, histograms [{}]",
            strict.z(),
            loose.z(),
            gap.min_delta(),
            marks.join(" ")
        ),
    ))
}

fn c7_config(n_atoms: usize, shots: u64) -> ExperimentConfig {
    let mut c = Preset::SweepDesk.config();
    c.name = "correlations".into();
    c.lattice.n_atoms = n_atoms;
    c.noise.profile = NoiseProfile::DecayOnly;
    let s = c.sweep.as_mut().expect("preset has a sweep section");
    s.n_shots = shots;
    s.checkpoints = vec![1.0, 1.25, 1.5, 1.75, 2.0, 2.5, 3.0];
    c
}

fn c7_correlations() -> Result<Outcome> {
    const N: usize = 10;
    let mut pinned = c7_config(N, 20_000);
    let s = pinned.sweep.as_mut().expect("sweep");
    s.prep_errors = false;
    s.inject_prep_error = Some(N / 2);
    s.checkpoints = vec![3.0];
    let camp = run_sweep_campaign(&pinned)?;
    let m = conditioned_magnetization_timeseries(&[(3.0, &camp.batches[0][..])], N, Image::E1)?[0];
    let pin_z = m.mean / m.sem;

    let cfg = c7_config(N, 100_000);
    let sweep = cfg.sweep.clone().expect("sweep");
    let camp = run_sweep_campaign(&cfg)?;
    let series: Vec<(f64, &[erasim_core::imaging::ShotRecord])> =
        camp.checkpoints.iter().copied().zip(camp.batches.iter().map(Vec::as_slice)).collect();
    let decay = conditioned_magnetization_timeseries(&series, N, Image::E2)?;
    let sched = sweep.schedule();
    let gap = minimum_gap_scan(&cfg.lattice.resolve()?, sweep.omega_max, -sweep.delta_max, sweep.delta_max, 121)?;
    let z = |p: &erasim_core::analysis::MagnetizationPoint| if p.sem > 0.0 { p.mean / p.sem } else { 0.0 };
    let before = decay.iter().filter(|p| !past(sched.detuning(p.time), gap.min_delta(), &sched)).max_by(|a, b| z(a).abs().total_cmp(&z(b).abs()));
    let after = decay.last().filter(|p| past(sched.detuning(p.time), gap.min_delta(), &sched));
    // Pre-critical decays are rare and the order there is weak, so only the
    // sign is required before the minimum gap.
    let flip = match (before, after) {
        (Some(b), Some(a)) => b.mean < 0.0 && z(a) > 2.0,
        _ => false,
    };
    let series_txt: Vec<String> = decay.iter().map(|p| format!("{}:{:+.3}({:+.1}s)", p.time, p.mean, z(p))).collect();

    let last = camp.batches.last().expect("checkpoints");
    let c1 = erasure_cross_correlation(last, N, 1)?;
    let c2 = erasure_cross_correlation(last, N, 2)?;
    Ok(Outcome::new(
        pin_z < -3.0 && flip && c1.z > 2.0 && c2.z < -2.0,
        format!(
            "pinned M {:+.3} ({pin_z:+.1} sigma); decay-anchored M [{}] min gap at {:.2} MHz; cross-correlation z(d=1) {:+.1}, z(d=2) {:+.1}",
            m.mean,
            series_txt.join(" "),
            gap.min_delta(),
            c1.z,
            c2.z
        ),
    ))
}

/// `P(X >= k)` for Poisson `lambda`, summed term by term.
fn tail(lambda: f64, k: u32) -> f64 {
    let mut term = (-lambda).exp();
    let mut below = 0.0;
    for j in 0..k {
        below += term;
        term *= lambda / f64::from(j + 1);
    }
    1.0 - below
}

fn c8_imaging() -> Result<Outcome> {
    let fid = |m: &ImagingModel| (1.0 - tail(m.lambda_bg, m.threshold), tail(m.lambda_atom, m.threshold));
    let mb = manybody_imaging();
    let (fp, fnf) = fid(&mb);
    let bell = bell_imaging();
    let (bfp, bfn) = fid(&bell);
    let pass = mb.threshold == 5
        && (fp - 0.9975).abs() <= 1e-3
        && (fnf - 0.6).abs() <= 0.02
        && (bfp - 0.980).abs() <= 0.005
        && (bfn - 0.980).abs() <= 0.005;
    Ok(Outcome::new(
        pass,
        format!(
            "many-body k=5 lambda=({:.4}, {:.4}): FP {fp:.5}, FN {fnf:.4}; Bell k={} lambda=({:.4}, {:.4}): {bfp:.4}/{bfn:.4}",
            mb.lambda_bg, mb.lambda_atom, bell.threshold, bell.lambda_bg, bell.lambda_atom
        ),
    ))
}

fn c9_exactness() -> Result<Outcome> {
    let mut fib = vec![0u128, 1];
    while fib.len() < 30 {
        let k = fib.len();
        fib.push(fib[k - 1] + fib[k - 2]);
    }
    let mut dims_ok = true;
    for n in 1..=20 {
        let spec = BasisSpec { kind: BasisKind::Blockaded, n_atoms: n };
        dims_ok &= spec.dimension() == fib[n + 2] && spec.build()?.len() as u128 == fib[n + 2];
    }
    let d26 = BasisSpec { kind: BasisKind::Blockaded, n_atoms: 26 }.dimension();
    dims_ok &= d26 == 317_811;

    let l = pair(30.0)?;
    let sched = PulseSchedule::resonant(2.0, 1.0);
    let rates = DecayRates { bright: 0.02, dark: 0.03, photoionization: 0.0 };
    let lind = LindbladModel::new(l.clone(), sched.clone(), rates)?;
    let rho = lind.evolve(&[sched.duration], 5e-4)?.pop().expect("one checkpoint");
    let cache = TermsCache::new(l, BasisKind::Full);
    let noise = ShotNoise::quiet(2);
    let sys = TrajectorySystem { cache: &cache, schedule: &sched, noise: &noise, rates, options: EvolveOptions::default() };
    let psi = QuantumState::ground(BasisKind::Full, 2, 0b11)?;
    let finals: Vec<Result<QuantumState>> = par_map_indexed(5000, |k| {
        let mut out = sys.run(psi.clone(), &[sched.duration], &mut rng_from_seed(9_000 + k))?;
        Ok(out.snapshots.pop().expect("one checkpoint"))
    });
    let mut est = DMatrix::zeros(lind.dim(), lind.dim());
    for s in finals {
        let v = embed_state(&s?);
        est += &v * v.adjoint();
    }
    est /= Complex64::new(5000.0, 0.0);
    let td = trace_distance(&est, &rho);
    Ok(Outcome::new(
        dims_ok && td <= 5e-3,
        format!("Fibonacci dimensions N<=20: {dims_ok}, N=26 -> {d26}; trajectory vs Lindblad trace distance {td:.2e}"),
    ))
}

fn cli(args: &[&str]) -> i32 {
    erasim_cli::main_with_args(std::iter::once("erasim").chain(args.iter().copied()))
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .map(|rd| {
            rd.filter_map(|e| e.ok())
                .filter(|e| e.path().is_file())
                .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap_or_default()))
                .collect()
        })
        .unwrap_or_default();
    v.sort();
    v
}

fn c10_determinism() -> Result<Outcome> {
    let tmp = tempfile::tempdir()?;
    let root = tmp.path();
    let mut sweep = Preset::SweepDesk.config();
    sweep.name = "replay-sweep".into();
    sweep.lattice.n_atoms = 8;
    sweep.imaging.keep_counts = true;
    let s = sweep.sweep.as_mut().expect("sweep");
    s.n_shots = 200;
    s.checkpoints = vec![1.5, 3.0];
    let mut bell = Preset::BellPaper.config();
    bell.name = "replay-bell".into();
    bell.imaging.erasure = Some(ImagingSpec::Bell);
    let b = bell.bell.as_mut().expect("bell");
    b.points_per_window = 3;
    b.shots_per_point = 100;
    b.budget_trajectories = 50;
    b.estimator.n_samples = 10_000;
    let sweep_cfg = root.join("sweep.toml");
    let bell_cfg = root.join("bell.toml");
    fs::write(&sweep_cfg, sweep.to_toml()?)?;
    fs::write(&bell_cfg, bell.to_toml()?)?;
    let (sc, bc) = (sweep_cfg.to_str().expect("utf-8"), bell_cfg.to_str().expect("utf-8"));

    // Inputs of the file-reading commands come from a reference run.
    let inputs = root.join("inputs");
    let inp = inputs.to_str().expect("utf-8");
    let mut codes = vec![
        cli(&["simulate-sweep", "--config", sc, "--out", inp]),
        cli(&["simulate-bell", "--config", bc, "--out", inp]),
    ];
    let shots: Vec<String> = (0..2).map(|k| inputs.join(format!("sweep_cp{k:02}.shots")).display().to_string()).collect();
    let counts = inputs.join("bell_counts_excised.csv").display().to_string();

    let mut differ = Vec::new();
    let commands: Vec<(&str, Vec<&str>)> = vec![
        ("simulate-sweep", vec!["simulate-sweep", "--config", sc]),
        ("simulate-bell", vec!["simulate-bell", "--config", bc]),
        ("fit-bell", vec!["fit-bell", "--config", bc, "--counts", &counts]),
        ("analyze", vec!["analyze", "--shots", &shots[0], &shots[1]]),
        ("threshold-scan", vec!["threshold-scan", "--shots", &shots[1]]),
        ("gap-scan", vec!["gap-scan", "--config", sc]),
    ];
    let mut n_files = 0;
    for (name, args) in &commands {
        let mut outs: Vec<PathBuf> = Vec::new();
        for threads in ["1", "3"] {
            let out = root.join(format!("{name}-{threads}"));
            let mut a = args.clone();
            let o = out.to_str().expect("utf-8").to_owned();
            a.extend(["--threads", threads, "--out", &o]);
            codes.push(cli(&a));
            outs.push(out);
        }
        let (x, y) = (tree(&outs[0]), tree(&outs[1]));
        n_files += x.len();
        if x.is_empty() || x != y {
            differ.push(*name);
        }
    }
    let ok_codes = codes.iter().all(|&c| c == 0);
    Ok(Outcome::new(
        ok_codes && differ.is_empty(),
        format!("{} commands, {n_files} files compared across 1 and 3 threads; exit codes {codes:?}; differing {differ:?}", commands.len()),
    ))
}

type Criterion = (u32, &'static str, fn() -> Result<Outcome>, Option<Duration>);

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "blockade enhancement", c1_blockade, Some(Duration::from_secs(1))),
        (2, "perturbative law", c2_perturbative, Some(Duration::from_secs(10))),
        (3, "noise-model hierarchy", c3_noise_budget, Some(Duration::from_secs(600))),
        (4, "lower-bound semantics", c4_lower_bound, Some(Duration::from_secs(300))),
        (5, "Beta-fit behavior", c5_beta_fit, Some(Duration::from_secs(120))),
        (6, "sweep order and excision", c6_sweep_order, Some(Duration::from_secs(1800))),
        (7, "erasure correlations", c7_correlations, Some(Duration::from_secs(1800))),
        (8, "imaging calibration", c8_imaging, Some(Duration::from_secs(1))),
        (9, "basis and oracle exactness", c9_exactness, Some(Duration::from_secs(300))),
        (10, "determinism", c10_determinism, None),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, run, budget) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = run().unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
        let elapsed = start.elapsed();
        let in_time = budget.map_or(true, |b| elapsed <= b);
        let pass = outcome.pass && in_time;
        failed += usize::from(!pass);
        let limit = budget.map_or(String::new(), |b| format!(" of {} s", b.as_secs()));
        println!(
            "{} criterion {id:>2} {name}: {} [{:.1} s{limit}]",
            if pass { "PASS" } else { "FAIL" },
            outcome.detail,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
