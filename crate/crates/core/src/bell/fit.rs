use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;

use super::beta::BetaDist;
use crate::error::{domain, Error, Result};

/// `f(t) = p0 + p1 (t - p2)^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
}

impl QuadraticFit {
    pub fn eval(&self, t: f64) -> f64 {
        self.p0 + self.p1 * (t - self.p2).powi(2)
    }
}

/// Closed parameter ranges searched by the grid fits; the prior is uniform on it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub p0: (f64, f64),
    pub p1: (f64, f64),
    pub p2: (f64, f64),
}

impl ParamBox {
    /// Box built from the data: `p2` spans the sampled times, `|p1|` allows a
    /// unit change over half the span, `p0` covers the observed range padded
    /// by `0.2 * range + 0.02` and clipped to `[0, 1]`.
    pub fn from_data(points: &[(f64, BetaDist)]) -> Result<Self> {
        if points.len() < 3 {
            return domain(format!("quadratic fit needs at least 3 points, got {}", points.len()));
        }
        let (t_lo, t_hi) = min_max(points.iter().map(|p| p.0));
        let (y_lo, y_hi) = min_max(points.iter().map(|p| p.1.mean()));
        let span = t_hi - t_lo;
        if !(span > 0.0) {
            return domain("quadratic fit needs at least two distinct times");
        }
        let pad = 0.2 * (y_hi - y_lo) + 0.02;
        let curv = 4.0 / (span * span);
        Ok(Self { p0: ((y_lo - pad).max(0.0), (y_hi + pad).min(1.0)), p1: (-curv, curv), p2: (t_lo, t_hi) })
    }

    fn axis(&self, k: usize) -> (f64, f64) {
        [self.p0, self.p1, self.p2][k]
    }

    pub fn validate(&self) -> Result<()> {
        for k in 0..3 {
            let (lo, hi) = self.axis(k);
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return domain(format!("empty parameter range ({lo}, {hi}) on axis p{k}"));
            }
        }
        Ok(())
    }
}

fn min_max(xs: impl Iterator<Item = f64>) -> (f64, f64) {
    xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
}

/// Resolution and zoom schedule of the grid posterior.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub points_per_axis: usize,
    /// Zooms after the coarse pass.
    pub zoom_stages: usize,
    /// Cells within this many log-units of the maximum define the next box.
    pub log_margin: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { points_per_axis: 41, zoom_stages: 3, log_margin: 12.0 }
    }
}

/// Normalized cell-centred density over `(p0, p1, p2)`.
#[derive(Clone, Debug)]
pub struct GridPosterior {
    pub bounds: ParamBox,
    pub axes: [Vec<f64>; 3],
    /// Probability mass per cell, index `(i0 * n1 + i1) * n2 + i2`.
    pub mass: Vec<f64>,
    pub argmax: QuadraticFit,
    pub max_log_likelihood: f64,
}

impl GridPosterior {
    pub fn step(&self, k: usize) -> f64 {
        let (lo, hi) = self.bounds.axis(k);
        (hi - lo) / self.axes[k].len() as f64
    }

    /// Marginal density of one parameter at the cell centres.
    pub fn marginal(&self, k: usize) -> Vec<f64> {
        let n = [self.axes[0].len(), self.axes[1].len(), self.axes[2].len()];
        let mut out = vec![0.0; n[k]];
        for (idx, m) in self.mass.iter().enumerate() {
            let i = [idx / (n[1] * n[2]), (idx / n[2]) % n[1], idx % n[2]];
            out[i[k]] += m;
        }
        let h = self.step(k);
        out.iter_mut().for_each(|v| *v /= h);
        out
    }

    pub fn p0_marginal(&self) -> Marginal {
        let h = self.step(0);
        Marginal::new(self.bounds.p0.0, h, self.marginal(0).iter().map(|d| d * h).collect())
    }
}

/// Piecewise-constant density on equal cells starting at `lo`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub lo: f64,
    pub width: f64,
    pub cdf: Vec<f64>,
}

impl Marginal {
    fn new(lo: f64, width: f64, mass: Vec<f64>) -> Self {
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = mass
            .iter()
            .map(|m| {
                acc += m;
                acc
            })
            .collect();
        let total = acc;
        cdf.iter_mut().for_each(|c| *c /= total);
        Self { lo, width, cdf }
    }

    /// A point mass at `x`.
    pub fn point(x: f64) -> Self {
        Self { lo: x, width: 0.0, cdf: vec![1.0] }
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.cdf[i] - if i == 0 { 0.0 } else { self.cdf[i - 1] }
    }

    pub fn mean(&self) -> f64 {
        (0..self.cdf.len()).map(|i| self.mass(i) * (self.lo + (i as f64 + 0.5) * self.width)).sum()
    }

    /// Cell by inverse CDF, then uniform inside it.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let i = self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1);
        self.lo + (i as f64 + rng.random::<f64>()) * self.width
    }
}

/// Beta log-density with the normalization precomputed.
#[derive(Clone, Copy)]
struct LogPdf {
    a1: f64,
    b1: f64,
    norm: f64,
}

impl LogPdf {
    fn new(d: &BetaDist) -> Self {
        Self { a1: d.alpha - 1.0, b1: d.beta - 1.0, norm: ln_beta(d.alpha, d.beta) }
    }

    #[inline]
    fn eval(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return f64::NEG_INFINITY;
        }
        let a = if self.a1 == 0.0 { 0.0 } else { self.a1 * x.ln() };
        let b = if self.b1 == 0.0 { 0.0 } else { self.b1 * (1.0 - x).ln() };
        let v = a + b - self.norm;
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }
}

fn centres(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let h = (hi - lo) / n as f64;
    (0..n).map(|i| lo + (i as f64 + 0.5) * h).collect()
}

fn evaluate<F>(bx: &ParamBox, n: usize, loglik: &F) -> ([Vec<f64>; 3], Vec<f64>)
where
    F: Fn(f64, f64, f64) -> f64 + Sync,
{
    let axes = [centres(bx.p0.0, bx.p0.1, n), centres(bx.p1.0, bx.p1.1, n), centres(bx.p2.0, bx.p2.1, n)];
    let log: Vec<f64> = (0..n * n * n)
        .into_par_iter()
        .with_min_len(n * n)
        .map(|idx| loglik(axes[0][idx / (n * n)], axes[1][(idx / n) % n], axes[2][idx % n]))
        .collect();
    (axes, log)
}

/// Grid posterior of a likelihood over `bx`, zooming onto the region within
/// `spec.log_margin` of the maximum after each pass.
pub fn grid_posterior<F>(bx: &ParamBox, spec: &GridSpec, loglik: F) -> Result<GridPosterior>
where
    F: Fn(f64, f64, f64) -> f64 + Sync,
{
    bx.validate()?;
    let n = spec.points_per_axis;
    if n < 3 {
        return domain("grid needs at least 3 points per axis");
    }
    let mut bounds = *bx;
    let mut pass = 0;
    loop {
        let (axes, log) = evaluate(&bounds, n, &loglik);
        let (best, max) = log
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        if !max.is_finite() {
            return Err(Error::DegenerateFit("no parameter set keeps the fit inside (0, 1) at every time".into()));
        }
        let argmax = QuadraticFit { p0: axes[0][best / (n * n)], p1: axes[1][(best / n) % n], p2: axes[2][best % n] };
        if pass == spec.zoom_stages {
            let mut mass: Vec<f64> = log.iter().map(|v| (v - max).exp()).collect();
            let total: f64 = mass.iter().sum();
            mass.iter_mut().for_each(|m| *m /= total);
            return Ok(GridPosterior { bounds, axes, mass, argmax, max_log_likelihood: max });
        }
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        for (idx, &v) in log.iter().enumerate() {
            if v >= max - spec.log_margin {
                let i = [idx / (n * n), (idx / n) % n, idx % n];
                for k in 0..3 {
                    lo[k] = lo[k].min(i[k]);
                    hi[k] = hi[k].max(i[k]);
                }
            }
        }
        let mut next = [(0.0, 0.0); 3];
        for k in 0..3 {
            let (a, b) = bounds.axis(k);
            let h = (b - a) / n as f64;
            let (olo, ohi) = bx.axis(k);
            next[k] = ((a + h * (lo[k] as f64 - 1.0)).max(olo), (a + h * (hi[k] as f64 + 2.0)).min(ohi));
        }
        bounds = ParamBox { p0: next[0], p1: next[1], p2: next[2] };
        pass += 1;
    }
}

/// Beta-likelihood fit of `f(t) = p0 + p1 (t - p2)^2` to points `(t_i, P_i)`.
pub fn beta_likelihood_fit(points: &[(f64, BetaDist)], bx: &ParamBox, spec: &GridSpec) -> Result<GridPosterior> {
    if points.len() < 3 {
        return domain(format!("quadratic fit needs at least 3 points, got {}", points.len()));
    }
    let data: Vec<(f64, LogPdf)> = points.iter().map(|(t, d)| (*t, LogPdf::new(d))).collect();
    grid_posterior(bx, spec, |p0, p1, p2| {
        data.iter().map(|(t, pdf)| pdf.eval(p0 + p1 * (t - p2).powi(2))).sum()
    })
}

/// Joint fit of the single-excitation curve `f1 = p0 + p1 (t - p2)^2` and
/// the ground curve `f2 = 1 - p0 - p_rr - p1 (t - p2)^2` at fixed `p_rr`.
/// The box is cut to `p0 <= 1 - p_rr`.
pub fn joint_constrained_fit(
    single: &[(f64, BetaDist)],
    ground: &[(f64, BetaDist)],
    p_rr: f64,
    bx: &ParamBox,
    spec: &GridSpec,
) -> Result<GridPosterior> {
    if !(0.0..=1.0).contains(&p_rr) {
        return domain(format!("P_rr = {p_rr} is not a probability"));
    }
    if single.len() + ground.len() < 3 {
        return domain("joint fit needs at least 3 points");
    }
    let mut cut = *bx;
    cut.p0.1 = cut.p0.1.min(1.0 - p_rr);
    let s: Vec<(f64, LogPdf)> = single.iter().map(|(t, d)| (*t, LogPdf::new(d))).collect();
    let g: Vec<(f64, LogPdf)> = ground.iter().map(|(t, d)| (*t, LogPdf::new(d))).collect();
    grid_posterior(&cut, spec, |p0, p1, p2| {
        let a: f64 = s.iter().map(|(t, pdf)| pdf.eval(p0 + p1 * (t - p2).powi(2))).sum();
        if a == f64::NEG_INFINITY {
            return a;
        }
        a + g.iter().map(|(t, pdf)| pdf.eval(1.0 - p0 - p_rr - p1 * (t - p2).powi(2))).sum::<f64>()
    })
}

/// Weighted least-squares quadratic with binomial errors, `p_hat` clipped to
/// `[0.5/n, 1 - 0.5/n]` when forming the variance.
pub fn gaussian_lsq_fit(points: &[(f64, u64, u64)]) -> Result<QuadraticFit> {
    if points.len() < 3 {
        return domain(format!("quadratic fit needs at least 3 points, got {}", points.len()));
    }
    let t0 = points.iter().map(|p| p.0).sum::<f64>() / points.len() as f64;
    let mut a = Matrix3::<f64>::zeros();
    let mut b = Vector3::<f64>::zeros();
    for &(t, k, n) in points {
        if n == 0 || k > n {
            return domain(format!("invalid counts {k}/{n}"));
        }
        let nf = n as f64;
        let p = k as f64 / nf;
        let pc = p.clamp(0.5 / nf, 1.0 - 0.5 / nf);
        let w = nf / (pc * (1.0 - pc));
        let x = t - t0;
        let row = Vector3::new(1.0, x, x * x);
        a += w * row * row.transpose();
        b += w * p * row;
    }
    let c = a.lu().solve(&b).ok_or_else(|| Error::DegenerateFit("normal equations are singular".into()))?;
    if c[2] == 0.0 {
        return Err(Error::DegenerateFit("fitted curvature is zero".into()));
    }
    let shift = -c[1] / (2.0 * c[2]);
    Ok(QuadraticFit { p0: c[0] - c[1] * c[1] / (4.0 * c[2]), p1: c[2], p2: t0 + shift })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand_distr::{Binomial, Distribution};

    fn synth(gen: QuadraticFit, times: &[f64], n: u64, seed: u64) -> Vec<(f64, u64, u64)> {
        let mut rng = rng_from_seed(seed);
        times
            .iter()
            .map(|&t| (t, Binomial::new(n, gen.eval(t)).unwrap().sample(&mut rng), n))
            .collect()
    }

    fn betas(data: &[(f64, u64, u64)]) -> Vec<(f64, BetaDist)> {
        data.iter().map(|&(t, k, n)| (t, BetaDist::from_counts(k, n).unwrap())).collect()
    }

    fn times() -> Vec<f64> {
        (0..11).map(|i| 0.1 + 0.002 * i as f64).collect()
    }

    #[test]
    fn recovers_generator_from_exact_points() {
        let gen = QuadraticFit { p0: 0.8, p1: -2000.0, p2: 0.109 };
        // Sharp Beta posteriors centred on the generator.
        let pts: Vec<(f64, BetaDist)> = times()
            .iter()
            .map(|&t| {
                let y = gen.eval(t);
                (t, BetaDist::new(1.0 + 1e5 * y, 1.0 + 1e5 * (1.0 - y)).unwrap())
            })
            .collect();
        let bx = ParamBox::from_data(&pts).unwrap();
        let post = beta_likelihood_fit(&pts, &bx, &GridSpec::default()).unwrap();
        let f = post.argmax;
        assert!((f.p0 - gen.p0).abs() < 3.0 * post.step(0), "{f:?}");
        assert!((f.p1 - gen.p1).abs() < 3.0 * post.step(1), "{f:?}");
        assert!((f.p2 - gen.p2).abs() < 3.0 * post.step(2), "{f:?}");
    }

    #[test]
    fn flat_data_has_no_curvature() {
        let pts: Vec<(f64, BetaDist)> = times().iter().map(|&t| (t, BetaDist::from_counts(300, 1000).unwrap())).collect();
        let bx = ParamBox::from_data(&pts).unwrap();
        let post = beta_likelihood_fit(&pts, &bx, &GridSpec::default()).unwrap();
        let scale = bx.p1.1;
        assert!(post.argmax.p1.abs() < 0.02 * scale, "{:?}", post.argmax);
        assert!((post.argmax.p0 - 0.3).abs() < 0.01);
    }

    #[test]
    fn beta_peak_not_above_gaussian_peak_near_one() {
        let gen = QuadraticFit { p0: 0.997, p1: -300.0, p2: 0.11 };
        let mut worse = 0;
        for seed in 0..10 {
            let data = synth(gen, &times(), 400, seed);
            let pts = betas(&data);
            let post = beta_likelihood_fit(&pts, &ParamBox::from_data(&pts).unwrap(), &GridSpec::default()).unwrap();
            let lsq = gaussian_lsq_fit(&data).unwrap();
            if post.argmax.p0 > lsq.p0 + post.step(0) {
                worse += 1;
            }
        }
        assert_eq!(worse, 0);
    }

    #[test]
    fn joint_fit_respects_the_simplex() {
        let p_rr = 0.002;
        let gen = QuadraticFit { p0: 0.95, p1: -1500.0, p2: 0.11 };
        let ts = times();
        let single: Vec<(f64, BetaDist)> = ts
            .iter()
            .map(|&t| {
                let y = gen.eval(t);
                (t, BetaDist::new(1.0 + 2e4 * y, 1.0 + 2e4 * (1.0 - y)).unwrap())
            })
            .collect();
        let ground: Vec<(f64, BetaDist)> = ts
            .iter()
            .map(|&t| {
                let y = 1.0 - p_rr - gen.eval(t);
                (t, BetaDist::new(1.0 + 2e4 * y, 1.0 + 2e4 * (1.0 - y)).unwrap())
            })
            .collect();
        let bx = ParamBox::from_data(&single).unwrap();
        let post = joint_constrained_fit(&single, &ground, p_rr, &bx, &GridSpec::default()).unwrap();
        let f = post.argmax;
        for &t in &ts {
            let f1 = f.eval(t);
            let f2 = 1.0 - f.p0 - p_rr - f.p1 * (t - f.p2).powi(2);
            assert!((f1 + f2 + p_rr - 1.0).abs() < 1e-12);
        }
        assert!(post.bounds.p0.1 <= 1.0 - p_rr);
        let integral: f64 = post.marginal(0).iter().sum::<f64>() * post.step(0);
        assert!((integral - 1.0).abs() < 1e-6);
        let m = post.marginal(0);
        let mode = post.axes[0][m.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0];
        assert!((mode - gen.p0).abs() <= 2.0 * post.step(0) + 1e-3, "{mode}");
    }

    #[test]
    fn impossible_box_is_degenerate() {
        let pts: Vec<(f64, BetaDist)> = times().iter().map(|&t| (t, BetaDist::new(2.0, 2.0).unwrap())).collect();
        let bx = ParamBox { p0: (1.5, 2.0), p1: (-1.0, 1.0), p2: (0.1, 0.12) };
        assert!(matches!(beta_likelihood_fit(&pts, &bx, &GridSpec::default()), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn lsq_recovers_exact_parabola() {
        let gen = QuadraticFit { p0: 0.6, p1: -900.0, p2: 0.108 };
        let data: Vec<(f64, u64, u64)> =
            times().iter().map(|&t| (t, (gen.eval(t) * 1e6).round() as u64, 1_000_000)).collect();
        let f = gaussian_lsq_fit(&data).unwrap();
        assert!((f.p0 - 0.6).abs() < 1e-5 && (f.p2 - 0.108).abs() < 1e-5, "{f:?}");
    }

    #[test]
    fn marginal_sampling_stays_in_support() {
        let m = Marginal::new(0.2, 0.1, vec![0.0, 1.0, 3.0, 0.0]);
        let mut rng = rng_from_seed(9);
        let xs: Vec<f64> = (0..20_000).map(|_| m.sample(&mut rng)).collect();
        assert!(xs.iter().all(|&x| (0.3..0.5).contains(&x)));
        let frac = xs.iter().filter(|&&x| x >= 0.4).count() as f64 / xs.len() as f64;
        assert!((frac - 0.75).abs() < 0.02);
        assert!((m.mean() - (0.25 * 0.35 + 0.75 * 0.45)).abs() < 1e-12);
    }
}
