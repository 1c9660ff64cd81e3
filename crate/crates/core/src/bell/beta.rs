use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, inv_beta_reg, ln_beta};
use statrs::function::gamma::digamma;

use crate::error::{domain, Error, Result};

/// Beta distribution on `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaDist {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaDist {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0) || !alpha.is_finite() || !beta.is_finite() {
            return domain(format!("Beta parameters must be positive and finite, got ({alpha}, {beta})"));
        }
        Ok(Self { alpha, beta })
    }

    /// Posterior of a binomial proportion under a uniform prior.
    pub fn from_counts(successes: u64, trials: u64) -> Result<Self> {
        if successes > trials {
            return domain(format!("{successes} successes out of {trials} trials"));
        }
        Self::new(successes as f64 + 1.0, (trials - successes) as f64 + 1.0)
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn variance(&self) -> f64 {
        let s = self.alpha + self.beta;
        self.alpha * self.beta / (s * s * (s + 1.0))
    }

    /// Density maximum; an endpoint when a shape parameter is at most one.
    pub fn mode(&self) -> f64 {
        match (self.alpha > 1.0, self.beta > 1.0) {
            (true, true) => (self.alpha - 1.0) / (self.alpha + self.beta - 2.0),
            (false, true) => 0.0,
            (true, false) => 1.0,
            (false, false) => {
                if self.alpha < self.beta {
                    0.0
                } else if self.alpha > self.beta {
                    1.0
                } else {
                    0.5
                }
            }
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return f64::NEG_INFINITY;
        }
        let term = |shape: f64, v: f64| if shape == 1.0 { 0.0 } else { (shape - 1.0) * v.ln() };
        let v = term(self.alpha, x) + term(self.beta, 1.0 - x) - ln_beta(self.alpha, self.beta);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else if x >= 1.0 {
            1.0
        } else {
            beta_reg(self.alpha, self.beta, x)
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        inv_beta_reg(self.alpha, self.beta, p.clamp(0.0, 1.0))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Beta::new(self.alpha, self.beta).expect("validated shape parameters").sample(rng)
    }
}

/// Maximum-likelihood Beta summary of a sample set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaFit {
    pub dist: BetaDist,
    /// Every sample was identical; `dist` is then a placeholder.
    pub degenerate: bool,
    pub mode: f64,
    /// 16% and 84% quantiles, widened if needed to contain the mode.
    pub interval: (f64, f64),
}

/// Smallest sample set accepted by `fit_beta_to_samples`.
pub const MIN_FIT_SAMPLES: usize = 100;

/// Samples are clamped into `[GUARD, 1 - GUARD]` before taking logarithms.
pub const GUARD: f64 = f64::EPSILON;

fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 12.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    acc + 1.0 / x + x2 / 2.0 + (1.0 / 6.0 - x2 * (1.0 / 30.0 - x2 * (1.0 / 42.0 - x2 / 30.0))) / (x * x * x)
}

/// Maximum-likelihood fit of a Beta distribution.
pub fn fit_beta_to_samples(samples: &[f64]) -> Result<BetaFit> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::DegenerateFit(format!("{} samples, need at least {MIN_FIT_SAMPLES}", samples.len())));
    }
    if samples.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return domain("Beta fit samples must lie in [0, 1]");
    }
    let first = samples[0];
    if samples.iter().all(|&x| x == first) {
        let dist = BetaDist { alpha: 1.0, beta: 1.0 };
        return Ok(BetaFit { dist, degenerate: true, mode: first, interval: (first, first) });
    }
    let n = samples.len() as f64;
    let clamp = |x: f64| x.clamp(GUARD, 1.0 - GUARD);
    let mean_ln_x = samples.iter().map(|&x| clamp(x).ln()).sum::<f64>() / n;
    let mean_ln_1mx = samples.iter().map(|&x| (1.0 - clamp(x)).ln()).sum::<f64>() / n;
    let mean = samples.iter().map(|&x| clamp(x)).sum::<f64>() / n;
    let var = samples.iter().map(|&x| (clamp(x) - mean).powi(2)).sum::<f64>() / n;
    let common = (mean * (1.0 - mean) / var.max(1e-300) - 1.0).max(1e-3);
    let (mut a, mut b) = ((mean * common).max(1e-3), ((1.0 - mean) * common).max(1e-3));
    for _ in 0..200 {
        let ds = digamma(a + b);
        let (ga, gb) = (ds - digamma(a) + mean_ln_x, ds - digamma(b) + mean_ln_1mx);
        let ts = trigamma(a + b);
        let (haa, hbb, hab) = (ts - trigamma(a), ts - trigamma(b), ts);
        let det = haa * hbb - hab * hab;
        let (mut da, mut db) = ((hbb * ga - hab * gb) / det, (haa * gb - hab * ga) / det);
        // Newton step on a concave objective; halve until both stay positive.
        while a - da <= 0.0 || b - db <= 0.0 {
            da *= 0.5;
            db *= 0.5;
        }
        a -= da;
        b -= db;
        if da.abs() <= 1e-12 * a && db.abs() <= 1e-12 * b {
            break;
        }
    }
    let dist = BetaDist::new(a, b).map_err(|_| Error::DegenerateFit("Beta fit diverged".into()))?;
    let mode = dist.mode();
    let (lo, hi) = (dist.quantile(0.16), dist.quantile(0.84));
    Ok(BetaFit { dist, degenerate: false, mode, interval: (lo.min(mode), hi.max(mode)) })
}
