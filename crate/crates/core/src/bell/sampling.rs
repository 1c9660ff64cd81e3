use nalgebra::{Matrix2, Matrix4, Vector4};
use rand::Rng;
use rand_distr::{Dirichlet, Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::beta::{fit_beta_to_samples, BetaDist, BetaFit};
use super::bound::{bell_bound_unchecked, Populations, GG, GR, RG, RR, SIMPLEX_TOL};
use super::counts::{split_windows, PopulationPoint, Window};
use super::fit::{joint_constrained_fit, GridSpec, Marginal, ParamBox, QuadraticFit};
use crate::error::{domain, Error, Result};
use crate::rng::{rng_for, Stream};

/// Smallest Monte-Carlo sample count accepted by the bound samplers.
pub const MIN_BOUND_SAMPLES: usize = 10_000;
const CHUNK: usize = 4096;
/// Attempts per accepted sample before sampling is declared stalled.
const MAX_ATTEMPTS: usize = 10_000;
/// Rejection fraction above which a result is flagged.
pub const REJECTION_WARNING: f64 = 0.5;

/// Sampling distribution of the four populations in one window.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WindowPosterior {
    pub window: Window,
    pub p_rr: BetaDist,
    /// `(P_rr, density of P_gr + P_rg)` at quantile nodes of `p_rr`.
    pub nodes: Vec<(f64, Marginal)>,
    /// Gaussian for `P_gr - P_rg`.
    pub asymmetry_mean: f64,
    pub asymmetry_sigma: f64,
    /// Joint-fit maximum at the `P_rr` node nearest the median.
    pub argmax: Option<QuadraticFit>,
    /// Pinned populations, bypassing all sampling.
    pub fixed: Option<Populations>,
}

impl WindowPosterior {
    /// Point mass at `p`.
    pub fn point(window: Window, p: Populations) -> Self {
        Self {
            window,
            p_rr: BetaDist { alpha: 1.0, beta: 1.0 },
            nodes: vec![(p[RR], Marginal::point(p[GR] + p[RG]))],
            asymmetry_mean: p[GR] - p[RG],
            asymmetry_sigma: 0.0,
            argmax: None,
            fixed: Some(p),
        }
    }

    /// Pooled `P_rr` posterior, joint constrained fits at `nodes` quantiles
    /// of it, and the averaged asymmetry.
    pub fn fit(window: Window, points: &[PopulationPoint], grid: &GridSpec, nodes: usize) -> Result<Self> {
        if points.len() < 3 {
            return domain(format!("{window:?} window has {} points, need 3", points.len()));
        }
        for p in points {
            p.validate()?;
        }
        let rr: u64 = points.iter().map(|p| p.counts[RR]).sum();
        let total: u64 = points.iter().map(|p| p.n_shots).sum();
        let p_rr = BetaDist::from_counts(rr, total)?;
        let single: Vec<(f64, BetaDist)> = points.iter().map(|p| (p.time, p.single_excitation_beta())).collect();
        let ground: Vec<(f64, BetaDist)> = points.iter().map(|p| (p.time, p.outcome_beta(GG))).collect();
        let bx = ParamBox::from_data(&single)?;
        let nodes = nodes.max(1);
        let mut fitted = Vec::with_capacity(nodes);
        let mut argmax = None;
        for k in 0..nodes {
            let x = p_rr.quantile((k as f64 + 0.5) / nodes as f64);
            let post = joint_constrained_fit(&single, &ground, x, &bx, grid)?;
            if k == nodes / 2 {
                argmax = Some(post.argmax);
            }
            fitted.push((x, post.p0_marginal()));
        }
        let m = points.len() as f64;
        let mut mean = 0.0;
        let mut var = 0.0;
        for p in points {
            let n = p.n_shots as f64;
            let (gr, rg) = (p.counts[GR] as f64 / n, p.counts[RG] as f64 / n);
            mean += (gr - rg) / m;
            var += (gr + rg - (gr - rg).powi(2)) / n / (m * m);
        }
        Ok(Self {
            window,
            p_rr,
            nodes: fitted,
            asymmetry_mean: mean,
            asymmetry_sigma: var.max(0.0).sqrt(),
            argmax,
            fixed: None,
        })
    }

    fn node(&self, x: f64) -> &Marginal {
        let i = self.nodes.partition_point(|n| n.0 < x);
        let pick = if i == 0 {
            0
        } else if i == self.nodes.len() || (x - self.nodes[i - 1].0) <= (self.nodes[i].0 - x) {
            i - 1
        } else {
            i
        };
        &self.nodes[pick.min(self.nodes.len() - 1)].1
    }

    /// One draw, or `None` when a component comes out negative.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Populations> {
        if let Some(p) = self.fixed {
            return Some(p);
        }
        let rr = self.p_rr.sample(rng);
        let s = self.node(rr).sample(rng);
        let d = if self.asymmetry_sigma > 0.0 {
            Normal::new(self.asymmetry_mean, self.asymmetry_sigma).expect("finite sigma").sample(rng)
        } else {
            self.asymmetry_mean
        };
        let p = [1.0 - rr - s, 0.5 * (s + d), 0.5 * (s - d), rr];
        p.iter().all(|&x| x >= 0.0).then_some(p)
    }

    /// Mean populations under the posterior, from the node marginals.
    pub fn mean_populations(&self) -> Populations {
        if let Some(p) = self.fixed {
            return p;
        }
        let s = self.nodes.iter().map(|n| n.1.mean()).sum::<f64>() / self.nodes.len() as f64;
        let rr = self.p_rr.mean();
        [1.0 - rr - s, 0.5 * (s + self.asymmetry_mean), 0.5 * (s - self.asymmetry_mean), rr]
    }
}

/// Per-atom readout confusion and residual preparation error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpamModel {
    /// Probability that an atom in `|g>` reads as `r`.
    pub eps_g: f64,
    /// Probability that an atom in `|r>` reads as `g`.
    pub eps_r: f64,
    /// Probability that an atom was never in `|g>` and reads as `r`.
    pub p_prep: f64,
}

impl SpamModel {
    pub fn identity() -> Self {
        Self { eps_g: 0.0, eps_r: 0.0, p_prep: 0.0 }
    }

    pub fn measurement_only(&self) -> Self {
        Self { p_prep: 0.0, ..*self }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eps_g", self.eps_g), ("eps_r", self.eps_r), ("p_prep", self.p_prep)] {
            if !(0.0..=1.0).contains(&v) {
                return domain(format!("{name} = {v} is not a probability"));
            }
        }
        if self.p_prep >= 1.0 {
            return domain("p_prep = 1 leaves nothing to correct");
        }
        Ok(())
    }

    /// Two-atom confusion matrix; column `j` is the readout distribution of
    /// true outcome `j`.
    pub fn confusion(&self) -> Matrix4<f64> {
        let m = Matrix2::new(1.0 - self.eps_g, self.eps_r, self.eps_g, 1.0 - self.eps_r);
        m.kronecker(&m)
    }

    /// Populations added by residual preparation errors when the intact
    /// atom of the pair would reach `|r>` with probability `q`.
    pub fn preparation_offset(&self, q: f64) -> Populations {
        let p = self.p_prep;
        let one = p * (1.0 - p);
        [0.0, one * (1.0 - q), one * (1.0 - q), 2.0 * one * q + p * p]
    }
}

/// Probability that a lone driven atom sits in `|r>` at the pair's pi
/// (`pulses = 1`) or 2 pi (`pulses = 2`) time.
pub fn lone_atom_excitation(window: Window) -> f64 {
    let area = match window {
        Window::Pi => std::f64::consts::PI / std::f64::consts::SQRT_2,
        Window::TwoPi => std::f64::consts::SQRT_2 * std::f64::consts::PI,
    };
    (0.5 * area).sin().powi(2)
}

/// Inverse of a `SpamModel` acting on population vectors.
#[derive(Clone, Copy, Debug)]
pub struct SpamCorrection {
    inverse: Matrix4<f64>,
    survive: f64,
    offsets: [Populations; 2],
    identity: bool,
}

impl SpamCorrection {
    pub fn new(spam: &SpamModel) -> Result<Self> {
        spam.validate()?;
        let c = spam.confusion();
        let inverse = c.try_inverse().ok_or_else(|| Error::Singular("readout confusion matrix is singular".into()))?;
        if !inverse.iter().all(|x| x.is_finite()) || c.determinant().abs() < 1e-12 {
            return Err(Error::Singular("readout confusion matrix is singular".into()));
        }
        Ok(Self {
            inverse,
            survive: (1.0 - spam.p_prep).powi(2),
            offsets: [
                spam.preparation_offset(lone_atom_excitation(Window::Pi)),
                spam.preparation_offset(lone_atom_excitation(Window::TwoPi)),
            ],
            identity: spam.is_identity(),
        })
    }

    /// Corrected populations, or `None` when they leave the simplex.
    pub fn apply(&self, window: Window, p: &Populations) -> Option<Populations> {
        if self.identity {
            return Some(*p);
        }
        let v = self.inverse * Vector4::from_column_slice(p);
        let b = &self.offsets[matches!(window, Window::TwoPi) as usize];
        let mut out = [0.0; 4];
        for k in 0..4 {
            out[k] = (v[k] - b[k]) / self.survive;
        }
        let s: f64 = out.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_TOL || out.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return None;
        }
        out.iter_mut().for_each(|x| *x /= s);
        Some(out)
    }
}

/// Monte-Carlo distribution of the bound and its Beta summary.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundEstimate {
    #[serde(skip)]
    pub samples: Vec<f64>,
    pub fit: BetaFit,
    pub mode: f64,
    pub interval: (f64, f64),
    pub n_samples: usize,
    pub n_rejected: u64,
    pub n_clipped: u64,
    pub rejection_rate: f64,
    /// Set when the rejection rate exceeds `REJECTION_WARNING`.
    pub rejection_warning: bool,
}

impl BoundEstimate {
    fn from_samples(samples: Vec<f64>, n_rejected: u64, n_clipped: u64) -> Result<Self> {
        let fit = fit_beta_to_samples(&samples)?;
        let n = samples.len();
        let rejection_rate = n_rejected as f64 / (n as f64 + n_rejected as f64);
        Ok(Self {
            mode: fit.mode,
            interval: fit.interval,
            fit,
            samples,
            n_samples: n,
            n_rejected,
            n_clipped,
            rejection_rate,
            rejection_warning: rejection_rate > REJECTION_WARNING,
        })
    }

    /// Error bars as `(plus, minus)` relative to the mode.
    pub fn error_bars(&self) -> (f64, f64) {
        (self.interval.1 - self.mode, self.mode - self.interval.0)
    }
}

fn sample_chunks<F>(n_samples: usize, seed: u64, draw: F) -> Result<BoundEstimate>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> Result<(f64, bool, u64)> + Sync,
{
    if n_samples < MIN_BOUND_SAMPLES {
        return domain(format!("{n_samples} bound samples requested, need at least {MIN_BOUND_SAMPLES}"));
    }
    let chunks = n_samples.div_ceil(CHUNK);
    let parts: Vec<Result<(Vec<f64>, u64, u64)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = CHUNK.min(n_samples - c * CHUNK);
            let mut rng = rng_for(seed, Stream::BoundSampling, c as u64);
            let mut out = Vec::with_capacity(len);
            let (mut rejected, mut clipped) = (0, 0);
            for _ in 0..len {
                let (v, clip, rej) = draw(&mut rng)?;
                out.push(v);
                rejected += rej;
                clipped += u64::from(clip);
            }
            Ok((out, rejected, clipped))
        })
        .collect();
    let mut samples = Vec::with_capacity(n_samples);
    let (mut rejected, mut clipped) = (0, 0);
    for part in parts {
        let (s, r, c) = part?;
        samples.extend(s);
        rejected += r;
        clipped += c;
    }
    BoundEstimate::from_samples(samples, rejected, clipped)
}

/// Bound distribution from the window posteriors, each draw passed through
/// `spam`; a draw rejected in either window restarts both.
pub fn spam_correct_and_sample(
    pi: &WindowPosterior,
    two_pi: &WindowPosterior,
    spam: &SpamModel,
    n_samples: usize,
    seed: u64,
) -> Result<BoundEstimate> {
    let corr = SpamCorrection::new(spam)?;
    sample_chunks(n_samples, seed, |rng| {
        let mut rejected = 0;
        for _ in 0..MAX_ATTEMPTS {
            let drawn = pi.draw(rng).zip(two_pi.draw(rng));
            let corrected = drawn.and_then(|(a, b)| corr.apply(Window::Pi, &a).zip(corr.apply(Window::TwoPi, &b)));
            if let Some((a, b)) = corrected {
                let v = bell_bound_unchecked(a[GR], a[RG], &b);
                return Ok((v.value.clamp(0.0, 1.0), v.clipped, rejected));
            }
            rejected += 1;
        }
        Err(Error::DegenerateFit(format!("no admissible populations after {MAX_ATTEMPTS} draws")))
    })
}

/// Uncorrected bound distribution.
pub fn sample_bound_distribution(
    pi: &WindowPosterior,
    two_pi: &WindowPosterior,
    n_samples: usize,
    seed: u64,
) -> Result<BoundEstimate> {
    spam_correct_and_sample(pi, two_pi, &SpamModel::identity(), n_samples, seed)
}

/// Bound distribution from outcome counts at the two times alone, with
/// Dirichlet(counts + 1) posteriors.
pub fn sample_bound_from_counts(pi: [u64; 4], two_pi: [u64; 4], n_samples: usize, seed: u64) -> Result<BoundEstimate> {
    let alpha = |c: [u64; 4]| c.map(|k| k as f64 + 1.0);
    let d_pi = Dirichlet::new(alpha(pi)).map_err(|e| Error::Domain(e.to_string()))?;
    let d_two = Dirichlet::new(alpha(two_pi)).map_err(|e| Error::Domain(e.to_string()))?;
    sample_chunks(n_samples, seed, |rng| {
        let a: [f64; 4] = d_pi.sample(rng);
        let b: [f64; 4] = d_two.sample(rng);
        let v = bell_bound_unchecked(a[GR], a[RG], &b);
        Ok((v.value.clamp(0.0, 1.0), v.clipped, 0))
    })
}

/// Settings of the full pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BellOptions {
    pub grid: GridSpec,
    /// Quantile nodes of the `P_rr` posterior.
    pub p_rr_nodes: usize,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for BellOptions {
    fn default() -> Self {
        Self { grid: GridSpec::default(), p_rr_nodes: 11, n_samples: 1_000_000, seed: 0 }
    }
}

/// Raw, readout-corrected and fully corrected bounds for one data set.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BellReport {
    pub pi: WindowPosterior,
    pub two_pi: WindowPosterior,
    pub raw: BoundEstimate,
    pub measurement: BoundEstimate,
    pub spam: BoundEstimate,
}

pub fn window_posteriors(points: &[PopulationPoint], opts: &BellOptions) -> Result<(WindowPosterior, WindowPosterior)> {
    let (pi, two) = split_windows(points)?;
    Ok((
        WindowPosterior::fit(Window::Pi, &pi, &opts.grid, opts.p_rr_nodes)?,
        WindowPosterior::fit(Window::TwoPi, &two, &opts.grid, opts.p_rr_nodes)?,
    ))
}

pub fn estimate_bell(points: &[PopulationPoint], spam: &SpamModel, opts: &BellOptions) -> Result<BellReport> {
    let (pi, two_pi) = window_posteriors(points, opts)?;
    let raw = sample_bound_distribution(&pi, &two_pi, opts.n_samples, opts.seed)?;
    let measurement = spam_correct_and_sample(&pi, &two_pi, &spam.measurement_only(), opts.n_samples, opts.seed)?;
    let spam = spam_correct_and_sample(&pi, &two_pi, spam, opts.n_samples, opts.seed)?;
    Ok(BellReport { pi, two_pi, raw, measurement, spam })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    const PI_POPS: Populations = [0.004, 0.497, 0.498, 0.001];
    const TWO_PI_POPS: Populations = [0.993, 0.003, 0.003, 0.001];

    #[test]
    fn point_masses_at_perfect_values() {
        let pi = WindowPosterior::point(Window::Pi, [0.0, 0.5, 0.5, 0.0]);
        let two = WindowPosterior::point(Window::TwoPi, [1.0, 0.0, 0.0, 0.0]);
        let est = sample_bound_distribution(&pi, &two, MIN_BOUND_SAMPLES, 1).unwrap();
        assert!(est.fit.degenerate);
        assert_eq!(est.mode, 1.0);
        assert_eq!(est.interval, (1.0, 1.0));
    }

    #[test]
    fn too_few_samples_rejected() {
        let pi = WindowPosterior::point(Window::Pi, PI_POPS);
        assert!(sample_bound_distribution(&pi, &pi, 100, 1).is_err());
    }

    #[test]
    fn confusion_columns_sum_to_one() {
        let c = SpamModel { eps_g: 0.01, eps_r: 0.003, p_prep: 0.0 }.confusion();
        for j in 0..4 {
            assert!((c.column(j).sum() - 1.0).abs() < 1e-15);
        }
        assert!(SpamCorrection::new(&SpamModel { eps_g: 0.5, eps_r: 0.5, p_prep: 0.0 }).is_err());
    }

    #[test]
    fn preparation_offset_accounts_for_lost_weight() {
        let s = SpamModel { eps_g: 0.0, eps_r: 0.0, p_prep: 0.03 };
        let b = s.preparation_offset(0.4);
        let lost = 1.0 - (1.0 - s.p_prep).powi(2);
        assert!((b.iter().sum::<f64>() - lost).abs() < 1e-15);
        assert!((lone_atom_excitation(Window::Pi) - (std::f64::consts::PI / (2.0 * 2f64.sqrt())).sin().powi(2)).abs() < 1e-15);
    }

    #[test]
    fn correction_inverts_forward_model() {
        let spam = SpamModel { eps_g: 0.004, eps_r: 0.002, p_prep: 0.01 };
        let corr = SpamCorrection::new(&spam).unwrap();
        for (w, truth) in [(Window::Pi, PI_POPS), (Window::TwoPi, TWO_PI_POPS)] {
            let b = spam.preparation_offset(lone_atom_excitation(w));
            let mixed: Vec<f64> = (0..4).map(|k| (1.0 - spam.p_prep).powi(2) * truth[k] + b[k]).collect();
            let measured = spam.confusion() * Vector4::from_column_slice(&mixed);
            let back = corr.apply(w, &[measured[0], measured[1], measured[2], measured[3]]).unwrap();
            for k in 0..4 {
                assert!((back[k] - truth[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_spam_matches_raw_sampling() {
        let pi = WindowPosterior {
            window: Window::Pi,
            p_rr: BetaDist::from_counts(2, 4000).unwrap(),
            nodes: vec![(0.0003, Marginal::point(0.99)), (0.001, Marginal::point(0.985))],
            asymmetry_mean: 0.001,
            asymmetry_sigma: 0.002,
            argmax: None,
            fixed: None,
        };
        let two = WindowPosterior::point(Window::TwoPi, TWO_PI_POPS);
        let a = sample_bound_distribution(&pi, &two, MIN_BOUND_SAMPLES, 5).unwrap();
        let b = spam_correct_and_sample(&pi, &two, &SpamModel::identity(), MIN_BOUND_SAMPLES, 5).unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn corrected_round_trip_recovers_clean_bound() {
        let spam = SpamModel { eps_g: 0.003, eps_r: 0.001, p_prep: 0.0 };
        let corrupt = |p: Populations| {
            let v = spam.confusion() * Vector4::from_column_slice(&p);
            [v[0], v[1], v[2], v[3]]
        };
        let clean = bell_bound_unchecked(PI_POPS[GR], PI_POPS[RG], &TWO_PI_POPS).value;
        let pi = WindowPosterior::fit(Window::Pi, &expand(corrupt(PI_POPS), 0.1), &GridSpec::default(), 3).unwrap();
        let two = WindowPosterior::fit(Window::TwoPi, &expand(corrupt(TWO_PI_POPS), 0.2), &GridSpec::default(), 3).unwrap();
        let est = spam_correct_and_sample(&pi, &two, &spam, 20_000, 7).unwrap();
        assert!(est.interval.0 - 2e-3 <= clean && clean <= est.interval.1 + 2e-3, "{clean} vs {:?}", est.interval);
    }

    /// Flat window of eleven points with populations `p` and many shots.
    fn expand(p: Populations, t0: f64) -> Vec<PopulationPoint> {
        (0..11)
            .map(|i| {
                let n = 200_000u64;
                let c = p.map(|x| (x * n as f64).round() as u64);
                PopulationPoint::new(t0 + 0.001 * i as f64, c)
            })
            .collect()
    }

    #[test]
    fn dirichlet_bound_centres_on_truth() {
        let n = 100_000f64;
        let c = |p: Populations| p.map(|x| (x * n).round() as u64);
        let est = sample_bound_from_counts(c(PI_POPS), c(TWO_PI_POPS), MIN_BOUND_SAMPLES, 2).unwrap();
        let truth = bell_bound_unchecked(PI_POPS[GR], PI_POPS[RG], &TWO_PI_POPS).value;
        assert!((est.mode - truth).abs() < 1e-3);
    }

    #[test]
    fn window_draws_sum_to_one() {
        let pi = WindowPosterior::fit(Window::Pi, &expand(PI_POPS, 0.1), &GridSpec::default(), 3).unwrap();
        let mut rng = rng_from_seed(3);
        for _ in 0..1000 {
            if let Some(p) = pi.draw(&mut rng) {
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }
}
