use erasim_core::dynamics::*;
use erasim_core::lattice::*;
use erasim_core::oracle::{embed_state, trace_distance, LindbladModel};
use erasim_core::rng::rng_from_seed;
use nalgebra::DMatrix;
use num_complex::Complex64;

fn chain(n: usize, v_mhz: f64) -> LatticeSpec {
    LatticeSpec::new(n, spacing_for_interaction(v_mhz, DEFAULT_C6_OVER_2PI).unwrap()).unwrap()
}

fn full_terms(l: &LatticeSpec) -> HamiltonianTerms {
    HamiltonianTerms::build(l, Basis::chain(BasisKind::Full, l.n_atoms).unwrap()).unwrap()
}

#[test]
fn unitary_norm_drift_per_step() {
    let l = chain(4, 50.0);
    let terms = full_terms(&l);
    let sched = PulseSchedule::sweep(5.0, 10.0, 2.0);
    let psi = QuantumState::ground(BasisKind::Full, 4, 0b1111).unwrap();
    let mut rk = Dopri5::new(terms.dim());
    let opts = EvolveOptions::default();
    let mut y = psi.amplitudes.clone();
    let mut t = 0.0;
    let mut worst: f64 = 0.0;
    // Drive one step at a time through the public integrator to see each step.
    let rhs = |t: f64, y: &[Complex64], out: &mut [Complex64]| {
        let mut h = vec![Complex64::default(); y.len()];
        terms.apply(
            erasim_core::units::angular(sched.rabi(t)),
            erasim_core::units::angular(sched.detuning(t)),
            y,
            &mut h,
        );
        for (o, v) in out.iter_mut().zip(h) {
            *o = Complex64::new(v.im, -v.re);
        }
    };
    let mut f = rhs;
    while t < sched.duration {
        let before: f64 = y.iter().map(|z| z.norm_sqr()).sum();
        t = rk.advance(&mut f, t, &mut y, sched.duration, &opts.step).unwrap();
        let after: f64 = y.iter().map(|z| z.norm_sqr()).sum();
        worst = worst.max((after - before).abs());
    }
    assert!(worst <= 1e-10, "worst per-step norm change {worst}");
}

#[test]
fn blockaded_pair_oscillates_at_enhanced_rate() {
    let omega = 1.0;
    let l = chain(2, 1000.0 * omega);
    let terms = full_terms(&l);
    let sched = PulseSchedule::resonant(omega, 2.0);
    let psi = QuantumState::ground(BasisKind::Full, 2, 0b11).unwrap();
    let opts = EvolveOptions::default();
    // P_gg returns to 1 after one collective period 1/(sqrt2 Omega).
    let p_gg = |t: f64| {
        let s = evolve_unitary_between(&psi, &terms, &l, &sched, 0.0, t, &opts).unwrap();
        s.probability(0)
    };
    let period_guess = 1.0 / (2f64.sqrt() * omega);
    let (mut a, mut b) = (0.8 * period_guess, 1.2 * period_guess);
    for _ in 0..60 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if p_gg(m1) > p_gg(m2) {
            b = m2;
        } else {
            a = m1;
        }
    }
    let period = 0.5 * (a + b);
    assert!((period / period_guess - 1.0).abs() < 1e-3, "period {period} vs {period_guess}");
}

#[test]
fn no_drive_leaves_populations() {
    let l = chain(3, 20.0);
    let terms = full_terms(&l);
    let sched = PulseSchedule::resonant(0.0, 1.0);
    let amps: Vec<Complex64> = (0..8).map(|k| Complex64::new(1.0 + k as f64, 0.5 * k as f64)).collect();
    let mut psi = QuantumState::from_amplitudes(Basis::chain(BasisKind::Full, 3).unwrap(), amps).unwrap();
    psi.normalize();
    let out = evolve_unitary(&psi, &terms, &l, &sched, &EvolveOptions::default()).unwrap();
    for (a, b) in psi.amplitudes.iter().zip(&out.amplitudes) {
        assert!((a.norm() - b.norm()).abs() < 1e-7);
    }
}

#[test]
fn quiet_trajectory_matches_unitary() {
    let l = chain(3, 40.0);
    let sched = PulseSchedule::sweep(4.0, 8.0, 1.5);
    let cache = TermsCache::new(l.clone(), BasisKind::Blockaded);
    let terms = cache.get(0b111).unwrap();
    let noise = ShotNoise::quiet(3);
    let opts = EvolveOptions::default();
    let sys = TrajectorySystem { cache: &cache, schedule: &sched, noise: &noise, rates: DecayRates::NONE, options: opts };
    let psi = QuantumState::ground(BasisKind::Blockaded, 3, 0b111).unwrap();
    let traj = sys.run(psi.clone(), &[sched.duration], &mut rng_from_seed(1)).unwrap();
    let uni = evolve_unitary(&psi, &terms, &l, &sched, &opts).unwrap();
    let uni = uni.normalized();
    for (a, b) in traj.snapshots[0].amplitudes.iter().zip(&uni.amplitudes) {
        assert!((a - b).norm() < 1e-7, "{a} vs {b}");
    }
}

fn ks_pvalue(d: f64, n: usize) -> f64 {
    let en = (n as f64).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    let mut sum = 0.0;
    for k in 1..100 {
        let kf = k as f64;
        sum += 2.0 * (-1f64).powi(k - 1) * (-2.0 * kf * kf * lambda * lambda).exp();
    }
    sum.clamp(0.0, 1.0)
}

#[test]
fn held_rydberg_atom_decays_exponentially() {
    let tau = 5.0;
    let l = LatticeSpec::new(1, 3.0).unwrap();
    let sched = PulseSchedule::resonant(0.0, 20.0 * tau);
    let cache = TermsCache::new(l.clone(), BasisKind::Full);
    let noise = ShotNoise::quiet(1);
    let rates = DecayRates { bright: 0.0, dark: 1.0 / tau, photoionization: 0.0 };
    let sys = TrajectorySystem { cache: &cache, schedule: &sched, noise: &noise, rates, options: EvolveOptions::default() };
    let basis = Basis::chain(BasisKind::Full, 1).unwrap();
    let excited = QuantumState::from_amplitudes(basis, vec![Complex64::default(), Complex64::new(1.0, 0.0)]).unwrap();
    let n = 10_000;
    let mut times: Vec<f64> = (0..n)
        .map(|k| {
            let out = sys.run(excited.clone(), &[sched.duration], &mut rng_from_seed(1000 + k as u64)).unwrap();
            out.snapshots[0].jumps[0].time
        })
        .collect();
    times.sort_by(f64::total_cmp);
    let d = times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let cdf = 1.0 - (-t / tau).exp();
            (cdf - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - cdf).abs())
        })
        .fold(0.0, f64::max);
    let p = ks_pvalue(d, n);
    assert!(p > 0.01, "KS p-value {p} (D = {d})");
}

fn trajectory_density(outs: &[QuantumState], dim: usize) -> DMatrix<Complex64> {
    let mut rho = DMatrix::zeros(dim, dim);
    for s in outs {
        let v = embed_state(s);
        rho += &v * v.adjoint();
    }
    rho / Complex64::new(outs.len() as f64, 0.0)
}

#[test]
fn decay_trajectories_match_master_equation() {
    let l = chain(2, 30.0);
    let sched = PulseSchedule::resonant(2.0, 1.0);
    let rates = DecayRates { bright: 0.02, dark: 0.03, photoionization: 0.0 };
    let lind = LindbladModel::new(l.clone(), sched.clone(), rates).unwrap();
    let rho = lind.evolve(&[sched.duration], 5e-4).unwrap().pop().unwrap();
    let cache = TermsCache::new(l.clone(), BasisKind::Full);
    let noise = ShotNoise::quiet(2);
    let sys = TrajectorySystem { cache: &cache, schedule: &sched, noise: &noise, rates, options: EvolveOptions::default() };
    let psi = QuantumState::ground(BasisKind::Full, 2, 0b11).unwrap();
    let finals: Vec<QuantumState> = par_map_indexed(5000, |k| {
        sys.run(psi.clone(), &[sched.duration], &mut rng_from_seed(77 + k)).unwrap().snapshots.pop().unwrap()
    });
    let est = trajectory_density(&finals, lind.dim());
    let td = trace_distance(&est, &rho);
    assert!(td <= 5e-3, "trace distance {td}");
}

#[test]
fn branched_estimator_matches_master_equation() {
    let l = chain(2, 200.0);
    let sched = PulseSchedule::resonant(3.0, 0.4);
    let rates = DecayRates { bright: 0.05, dark: 0.08, photoionization: 0.02 };
    let lind = LindbladModel::new(l.clone(), sched.clone(), rates).unwrap();
    let checkpoints = [0.15, 0.4];
    let rhos = lind.evolve(&checkpoints, 2e-4).unwrap();
    let cache = TermsCache::new(l.clone(), BasisKind::Full);
    let noise = ShotNoise::quiet(2);
    let sys = TrajectorySystem { cache: &cache, schedule: &sched, noise: &noise, rates, options: EvolveOptions::default() };
    let psi = QuantumState::ground(BasisKind::Full, 2, 0b11).unwrap();
    let n = 2000;
    let outs: Vec<BranchedOutcome> =
        par_map_indexed(n, |k| sys.run_branched(psi.clone(), &checkpoints, &mut rng_from_seed(5 + k)).unwrap());
    for (c, rho) in rhos.iter().enumerate() {
        let mut est = DMatrix::zeros(lind.dim(), lind.dim());
        for o in &outs {
            let v = embed_state(&o.no_jump[c]);
            est += &v * v.adjoint();
            if let Some(b) = &o.branch[c] {
                let v = embed_state(b);
                est += &v * v.adjoint() * Complex64::new(o.branch_weight, 0.0);
            }
        }
        est /= Complex64::new(n as f64, 0.0);
        let td = trace_distance(&est, rho);
        assert!(td < 2e-3, "checkpoint {c}: trace distance {td}");
    }
}

#[test]
fn ensemble_is_independent_of_thread_count() {
    let spec = EnsembleSpec {
        lattice: chain(4, 100.0),
        kind: BasisKind::Blockaded,
        schedule: PulseSchedule::sweep(4.0, 10.0, 1.0),
        noise: NoiseConfig {
            doppler_sigma: 0.05,
            laser_frequency_psd: Psd::white(1e-3, 0.1, 20.0),
            bright_lifetime: 5.0,
            dark_lifetime: 5.0,
            ..NoiseConfig::noiseless()
        },
        options: EvolveOptions::default(),
        checkpoints: vec![0.5, 1.0],
        n_trajectories: 40,
        master_seed: 11,
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| run_ensemble(&spec).unwrap())
    };
    let a = run(1);
    let b = run(3);
    assert_eq!(a, b);
    let mut buf_a = Vec::new();
    let mut buf_b = Vec::new();
    write_ensemble(&a, 4, &spec.checkpoints, &mut buf_a).unwrap();
    write_ensemble(&b, 4, &spec.checkpoints, &mut buf_b).unwrap();
    assert_eq!(buf_a, buf_b);
    assert!(a.iter().any(|r| !r.jumps.is_empty()));
}

#[test]
fn cached_path_magnus_trajectories_match_master_equation() {
    let l = chain(2, 30.0);
    let sched = PulseSchedule::resonant(2.0, 1.0);
    let rates = DecayRates { bright: 0.02, dark: 0.03, photoionization: 0.0 };
    let lind = LindbladModel::new(l.clone(), sched.clone(), rates).unwrap();
    let rho = lind.evolve(&[sched.duration], 5e-4).unwrap().pop().unwrap();
    let cache = TermsCache::new(l.clone(), BasisKind::Full);
    let noise = ShotNoise::quiet(2);
    let sys =
        TrajectorySystem { cache: &cache, schedule: &sched, noise: &noise, rates, options: EvolveOptions::magnus(0.01) };
    let paths = PathCache::new();
    let path = paths.get(&sys, 0b11, &[sched.duration]).unwrap();
    let finals: Vec<QuantumState> = par_map_indexed(5000, |k| {
        sys.run_from_path(&path, &mut rng_from_seed(900 + k)).unwrap().snapshots.pop().unwrap()
    });
    let est = trajectory_density(&finals, lind.dim());
    let td = trace_distance(&est, &rho);
    assert!(td <= 5e-3, "trace distance {td}");
}

#[test]
fn magnus_sweep_matches_dopri() {
    let l = LatticeSpec::new(8, 2.8).unwrap();
    let terms = HamiltonianTerms::build(&l, Basis::chain(BasisKind::Blockaded, 8).unwrap()).unwrap();
    let sched = PulseSchedule::sweep(5.6, 30.0, 3.0);
    let psi = QuantumState::ground(BasisKind::Blockaded, 8, 0xff).unwrap();
    let a = evolve_unitary(&psi, &terms, &l, &sched, &EvolveOptions::with_tolerance(1e-11)).unwrap();
    let b = evolve_unitary(&psi, &terms, &l, &sched, &EvolveOptions::magnus(0.01)).unwrap();
    let overlap: Complex64 = a.amplitudes.iter().zip(&b.amplitudes).map(|(x, y)| x.conj() * y).sum();
    assert!(1.0 - overlap.norm_sqr() < 1e-8, "infidelity {}", 1.0 - overlap.norm_sqr());
}

#[test]
fn jump_channels_follow_rate_ratio() {
    let l = LatticeSpec::new(1, 3.0).unwrap();
    let sched = PulseSchedule::resonant(0.0, 200.0);
    let cache = TermsCache::new(l.clone(), BasisKind::Full);
    let noise = ShotNoise::quiet(1);
    let rates = DecayRates { bright: 0.3, dark: 0.7, photoionization: 0.0 };
    let sys = TrajectorySystem { cache: &cache, schedule: &sched, noise: &noise, rates, options: EvolveOptions::default() };
    let basis = Basis::chain(BasisKind::Full, 1).unwrap();
    let excited = QuantumState::from_amplitudes(basis, vec![Complex64::default(), Complex64::new(1.0, 0.0)]).unwrap();
    let n = 10_000u64;
    let bright = par_map_indexed(n, |k| {
        let out = sys.run(excited.clone(), &[sched.duration], &mut rng_from_seed(k)).unwrap();
        u64::from(out.snapshots[0].jumps[0].channel == DecayChannel::Bright)
    })
    .iter()
    .sum::<u64>() as f64;
    let expect = 0.3 * n as f64;
    let sigma = (n as f64 * 0.3 * 0.7).sqrt();
    assert!((bright - expect).abs() < 3.0 * sigma, "{bright} bright jumps");
}
