//! Adaptive Dormand-Prince 5(4) integrator for complex state vectors.

use num_complex::Complex64;

use crate::error::{Error, Result};

type C = Complex64;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Step-size control. The local error estimate of each accepted step
/// satisfies `|err| <= tolerance * |y|` (Euclidean norms).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepControl {
    pub tolerance: f64,
    pub max_step: f64,
    pub min_step: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self { tolerance: 1e-9, max_step: f64::INFINITY, min_step: 1e-13 }
    }
}

/// Reusable workspace; `reset` must be called whenever the state or the
/// right-hand side changes discontinuously.
pub struct Dopri5 {
    k: [Vec<C>; 7],
    tmp: Vec<C>,
    ynew: Vec<C>,
    fsal: bool,
    h: f64,
    pub accepted: usize,
    pub rejected: usize,
}

fn norm(v: &[C]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

impl Dopri5 {
    pub fn new(dim: usize) -> Self {
        let z = vec![C::default(); dim];
        Self {
            k: std::array::from_fn(|_| z.clone()),
            tmp: z.clone(),
            ynew: z,
            fsal: false,
            h: 0.0,
            accepted: 0,
            rejected: 0,
        }
    }

    /// Forget cached derivatives and resize for a state of dimension `dim`.
    pub fn reset(&mut self, dim: usize) {
        if self.tmp.len() != dim {
            *self = Self { accepted: self.accepted, rejected: self.rejected, ..Self::new(dim) };
        }
        self.fsal = false;
    }

    fn combine(&mut self, y: &[C], h: f64, coeffs: &[(usize, f64)]) {
        for i in 0..y.len() {
            let mut acc = C::default();
            for &(j, a) in coeffs {
                acc += self.k[j][i] * a;
            }
            self.tmp[i] = y[i] + acc * h;
        }
    }

    /// One trial step from `(t, y)`; the candidate lands in `self.ynew` and
    /// the scaled error norm is returned.
    fn trial<F>(&mut self, f: &mut F, t: f64, y: &[C], h: f64, tol: f64) -> f64
    where
        F: FnMut(f64, &[C], &mut [C]),
    {
        if !self.fsal {
            let mut k0 = std::mem::take(&mut self.k[0]);
            f(t, y, &mut k0);
            self.k[0] = k0;
            self.fsal = true;
        }
        let stages: [(f64, &[(usize, f64)]); 5] = [
            (C2, &[(0, A21)]),
            (C3, &[(0, A31), (1, A32)]),
            (C4, &[(0, A41), (1, A42), (2, A43)]),
            (C5, &[(0, A51), (1, A52), (2, A53), (3, A54)]),
            (1.0, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)]),
        ];
        for (s, (c, coeffs)) in stages.iter().enumerate() {
            self.combine(y, h, coeffs);
            let mut ks = std::mem::take(&mut self.k[s + 1]);
            f(t + c * h, &self.tmp, &mut ks);
            self.k[s + 1] = ks;
        }
        for i in 0..y.len() {
            self.ynew[i] = y[i]
                + (self.k[0][i] * B1 + self.k[2][i] * B3 + self.k[3][i] * B4 + self.k[4][i] * B5 + self.k[5][i] * B6)
                    * h;
        }
        let mut k6 = std::mem::take(&mut self.k[6]);
        f(t + h, &self.ynew, &mut k6);
        self.k[6] = k6;
        let mut err2 = 0.0;
        for i in 0..y.len() {
            let e = (self.k[0][i] * E1
                + self.k[2][i] * E3
                + self.k[3][i] * E4
                + self.k[4][i] * E5
                + self.k[5][i] * E6
                + self.k[6][i] * E7)
                * h;
            err2 += e.norm_sqr();
        }
        let scale = norm(y).max(norm(&self.ynew)).max(1e-300);
        err2.sqrt() / (tol * scale)
    }

    fn initial_step<F>(&mut self, f: &mut F, t: f64, y: &[C], ctl: &StepControl) -> f64
    where
        F: FnMut(f64, &[C], &mut [C]),
    {
        let mut k0 = std::mem::take(&mut self.k[0]);
        f(t, y, &mut k0);
        let d0 = norm(y);
        let d1 = norm(&k0);
        self.k[0] = k0;
        self.fsal = true;
        let h = if d0 > 1e-300 && d1 > 1e-300 { 0.01 * d0 / d1 } else { 1e-6 };
        h.min(ctl.max_step)
    }

    /// Advance by one accepted step of size at most `t_limit - t`. Returns
    /// the new time; `y` is updated in place.
    pub fn advance<F>(&mut self, f: &mut F, t: f64, y: &mut [C], t_limit: f64, ctl: &StepControl) -> Result<f64>
    where
        F: FnMut(f64, &[C], &mut [C]),
    {
        if self.h <= 0.0 {
            self.h = self.initial_step(f, t, y, ctl);
        }
        loop {
            let remaining = t_limit - t;
            let hit_end = self.h >= remaining;
            let h = if hit_end { remaining } else { self.h.min(ctl.max_step) };
            let err = self.trial(f, t, y, h, ctl.tolerance);
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 && err.is_finite() {
                y.copy_from_slice(&self.ynew);
                self.k.swap(0, 6);
                self.accepted += 1;
                // A shortened final step says nothing about the natural step.
                if !hit_end || factor < 1.0 {
                    self.h = (h * factor).min(ctl.max_step);
                }
                return Ok(if hit_end { t_limit } else { t + h });
            }
            self.rejected += 1;
            self.h = h * factor.min(1.0);
            if self.h < ctl.min_step * t.abs().max(1.0) || !self.h.is_finite() {
                return Err(Error::StepUnderflow { t });
            }
        }
    }

    /// Integrate from `t0` to `t1` in place.
    pub fn integrate<F>(&mut self, f: &mut F, t0: f64, t1: f64, y: &mut [C], ctl: &StepControl) -> Result<()>
    where
        F: FnMut(f64, &[C], &mut [C]),
    {
        let mut t = t0;
        while t < t1 {
            t = self.advance(f, t, y, t1, ctl)?;
        }
        Ok(())
    }
}
