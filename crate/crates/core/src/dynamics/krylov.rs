//! Krylov exponential and a fourth-order commutator-free Magnus step.
//!
//! The generator is linear in the drive amplitudes, so a weighted sum of
//! generators at the two Gauss nodes is again a generator at averaged
//! drives. Each step therefore costs two Arnoldi exponentials.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

type C = Complex64;

const SQRT3_6: f64 = 0.288_675_134_594_812_9;
const NODE1: f64 = 0.5 - SQRT3_6;
const NODE2: f64 = 0.5 + SQRT3_6;
const W_SMALL: f64 = 0.25 - SQRT3_6;
const W_LARGE: f64 = 0.25 + SQRT3_6;

/// Largest Krylov dimension before the step is split.
pub const MAX_KRYLOV_DIM: usize = 40;

/// Arnoldi workspace for `exp(tau L) v`.
pub struct Krylov {
    basis: Vec<Vec<C>>,
    w: Vec<C>,
    last_m: usize,
}

fn dot(a: &[C], b: &[C]) -> C {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

impl Krylov {
    pub fn new(dim: usize) -> Self {
        Self { basis: Vec::new(), w: vec![C::default(); dim], last_m: 4 }
    }

    /// Overwrites `v` with `exp(tau L) v`; returns false (leaving `v`
    /// untouched) when the error estimate exceeds `tol * |v|` at the
    /// maximal dimension.
    pub fn expv(&mut self, tau: f64, apply: &mut dyn FnMut(&[C], &mut [C]), v: &mut [C], tol: f64) -> bool {
        let dim = v.len();
        let beta = norm(v);
        if beta == 0.0 {
            return true;
        }
        if self.w.len() != dim {
            self.w = vec![C::default(); dim];
        }
        let m_max = MAX_KRYLOV_DIM.min(dim);
        while self.basis.len() < m_max + 1 {
            self.basis.push(vec![C::default(); dim]);
        }
        for b in &mut self.basis {
            b.resize(dim, C::default());
        }
        let inv = 1.0 / beta;
        for (b, x) in self.basis[0].iter_mut().zip(v.iter()) {
            *b = x * inv;
        }
        let mut h = DMatrix::<C>::zeros(m_max + 1, m_max);
        for j in 0..m_max {
            apply(&self.basis[j], &mut self.w);
            for i in 0..=j {
                let c = dot(&self.basis[i], &self.w);
                h[(i, j)] = c;
                for (wk, bk) in self.w.iter_mut().zip(&self.basis[i]) {
                    *wk -= c * bk;
                }
            }
            let next = norm(&self.w);
            h[(j + 1, j)] = C::new(next, 0.0);
            let m = j + 1;
            let breakdown = next <= 1e-14 * beta.max(1.0);
            if breakdown || m == m_max || m + 1 >= self.last_m {
                let hm = h.view((0, 0), (m, m)).map(|z| z * tau);
                let e = hm.exp();
                let err = beta * next * tau.abs() * e[(m - 1, 0)].norm();
                if breakdown || err <= tol * beta {
                    self.last_m = m.max(2);
                    v.fill(C::default());
                    for (k, b) in self.basis[..m].iter().enumerate() {
                        let c = e[(k, 0)] * beta;
                        for (vi, bi) in v.iter_mut().zip(b) {
                            *vi += c * bi;
                        }
                    }
                    return true;
                }
            }
            if m == m_max {
                self.last_m = m_max;
                break;
            }
            let inv = 1.0 / next;
            for (b, x) in self.basis[j + 1].iter_mut().zip(&self.w) {
                *b = x * inv;
            }
        }
        false
    }
}

/// Generator family `L(omega, delta)` acting as `out = L psi`.
pub trait DriveOperator {
    /// Drive amplitudes (angular units) at time `t`.
    fn drive(&self, t: f64) -> (f64, f64);
    /// `out = -i H_eff(omega, delta) psi`.
    fn apply(&self, omega: f64, delta: f64, psi: &[C], out: &mut [C]);
}

/// Fixed-size Magnus stepper. Steps that the Krylov exponential cannot
/// resolve at `MAX_KRYLOV_DIM` are halved.
pub struct Magnus4 {
    krylov: Krylov,
    backup: Vec<C>,
    pub max_step: f64,
    pub tolerance: f64,
    h: f64,
    pub accepted: usize,
    pub rejected: usize,
}

impl Magnus4 {
    pub fn new(dim: usize, max_step: f64, tolerance: f64) -> Self {
        Self {
            krylov: Krylov::new(dim),
            backup: vec![C::default(); dim],
            max_step,
            tolerance,
            h: max_step,
            accepted: 0,
            rejected: 0,
        }
    }

    pub fn reset(&mut self, dim: usize) {
        self.backup.resize(dim, C::default());
        self.h = self.max_step;
    }

    fn exp_at(&mut self, op: &dyn DriveOperator, w: (f64, f64), d1: (f64, f64), d2: (f64, f64), h: f64, y: &mut [C]) -> bool {
        let s = w.0 + w.1;
        let omega = (w.0 * d1.0 + w.1 * d2.0) / s;
        let delta = (w.0 * d1.1 + w.1 * d2.1) / s;
        self.krylov.expv(s * h, &mut |a, b| op.apply(omega, delta, a, b), y, self.tolerance)
    }

    /// One step from `t`, never passing `t_limit`; returns the new time.
    pub fn advance(&mut self, op: &dyn DriveOperator, t: f64, y: &mut [C], t_limit: f64) -> Result<f64> {
        let span = t_limit - t;
        if !(span > 0.0) {
            return Ok(t);
        }
        if self.backup.len() != y.len() {
            self.backup.resize(y.len(), C::default());
        }
        loop {
            let h = if span <= self.h * (1.0 + 1e-6) { span } else { self.h };
            if h < 1e-13 && h < span {
                return Err(Error::StepUnderflow { t });
            }
            let d1 = op.drive(t + NODE1 * h);
            let d2 = op.drive(t + NODE2 * h);
            self.backup.copy_from_slice(y);
            if self.exp_at(op, (W_LARGE, W_SMALL), d1, d2, h, y) && self.exp_at(op, (W_SMALL, W_LARGE), d1, d2, h, y) {
                self.accepted += 1;
                if h == self.h {
                    self.h = (self.h * 1.5).min(self.max_step);
                }
                return Ok(if h == span { t_limit } else { t + h });
            }
            y.copy_from_slice(&self.backup);
            self.rejected += 1;
            self.h = 0.5 * h;
        }
    }

    pub fn integrate(&mut self, op: &dyn DriveOperator, t0: f64, t1: f64, y: &mut [C]) -> Result<()> {
        let mut t = t0;
        while t < t1 {
            t = self.advance(op, t, y, t1)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct TwoLevel {
        decay: f64,
    }

    impl DriveOperator for TwoLevel {
        fn drive(&self, t: f64) -> (f64, f64) {
            (2.0 + t.sin(), 0.5 * t)
        }
        fn apply(&self, omega: f64, delta: f64, psi: &[C], out: &mut [C]) {
            let i = C::new(0.0, 1.0);
            out[0] = -i * (0.5 * omega * psi[1]);
            out[1] = -i * (0.5 * omega * psi[0] - delta * psi[1]) - 0.5 * self.decay * psi[1];
        }
    }

    #[test]
    fn exponential_of_diagonal() {
        let mut k = Krylov::new(3);
        let rates = [C::new(0.0, -1.0), C::new(-0.3, 2.0), C::new(0.0, 5.0)];
        let mut v = vec![C::new(1.0, 0.0), C::new(0.5, 0.5), C::new(-0.2, 0.1)];
        let start = v.clone();
        let mut op = |a: &[C], b: &mut [C]| {
            for k in 0..3 {
                b[k] = rates[k] * a[k];
            }
        };
        assert!(k.expv(0.7, &mut op, &mut v, 1e-12));
        for k in 0..3 {
            assert!((v[k] - start[k] * (rates[k] * 0.7).exp()).norm() < 1e-12);
        }
    }

    #[test]
    fn magnus_matches_dopri() {
        use crate::dynamics::{Dopri5, StepControl};
        let sys = TwoLevel { decay: 0.2 };
        let y0 = vec![C::new(1.0, 0.0), C::default()];
        let mut a = y0.clone();
        let mut m = Magnus4::new(2, 0.01, 1e-12);
        m.integrate(&sys, 0.0, 3.0, &mut a).unwrap();
        let mut b = y0;
        let mut rk = Dopri5::new(2);
        let ctl = StepControl { tolerance: 1e-12, ..StepControl::default() };
        rk.integrate(
            &mut |t, y, o| {
                let (w, d) = sys.drive(t);
                sys.apply(w, d, y, o)
            },
            0.0,
            3.0,
            &mut b,
            &ctl,
        )
        .unwrap();
        for k in 0..2 {
            assert!((a[k] - b[k]).norm() < 1e-8, "{} vs {}", a[k], b[k]);
        }
    }

    #[test]
    fn long_step_lands_on_limit() {
        let sys = TwoLevel { decay: 0.0 };
        let mut y = vec![C::new(1.0, 0.0), C::default()];
        let mut m = Magnus4::new(2, 100.0, 1e-12);
        let t = m.advance(&sys, 0.0, &mut y, 1.0).unwrap();
        assert_eq!(t, 1.0);
        assert!((y[0].norm_sqr() + y[1].norm_sqr() - 1.0).abs() < 1e-10);
    }
}
