use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Tangent detuning sweep `Delta(t) = Delta_max tan(k (1 - 2t/T)) / tan(k)`,
/// running from `+Delta_max` at `t = 0` to `-Delta_max` at `t = T`.
pub fn tangent_detuning(t: f64, delta_max: f64, duration: f64, shape: f64) -> Result<f64> {
    if !(duration > 0.0) {
        return domain(format!("duration must be positive, got {duration}"));
    }
    if !(shape > 0.0 && shape < std::f64::consts::FRAC_PI_2) {
        return domain(format!("shape must lie in (0, pi/2), got {shape}"));
    }
    if !(0.0..=duration).contains(&t) {
        return domain(format!("t = {t} outside [0, {duration}]"));
    }
    Ok(tangent_unchecked(t, delta_max, duration, shape))
}

#[inline]
fn tangent_unchecked(t: f64, delta_max: f64, duration: f64, shape: f64) -> f64 {
    delta_max * (shape * (1.0 - 2.0 * t / duration)).tan() / shape.tan()
}

/// Rabi frequency profile, values in MHz.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RabiProfile {
    Constant { omega: f64 },
    /// Plateau at `omega_max` with sin^2 ramps over the first and last
    /// `ramp_fraction` of the duration.
    Ramped { omega_max: f64, ramp_fraction: f64 },
    /// Linear interpolation through `(t, omega)` points, held flat outside.
    Piecewise { points: Vec<[f64; 2]> },
}

/// Detuning profile, values in MHz.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetuningProfile {
    Constant { delta: f64 },
    Tangent { delta_max: f64, shape: f64 },
    Piecewise { points: Vec<[f64; 2]> },
}

/// Global drive as a function of time on `[0, duration]` (us).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    pub duration: f64,
    pub rabi: RabiProfile,
    pub detuning: DetuningProfile,
}

pub const DEFAULT_TANGENT_SHAPE: f64 = 1.1;

fn interpolate(points: &[[f64; 2]], t: f64) -> f64 {
    match points.iter().position(|p| p[0] > t) {
        None => points.last().map_or(0.0, |p| p[1]),
        Some(0) => points[0][1],
        Some(k) => {
            let [t0, y0] = points[k - 1];
            let [t1, y1] = points[k];
            y0 + (y1 - y0) * (t - t0) / (t1 - t0)
        }
    }
}

fn check_points(points: &[[f64; 2]]) -> Result<()> {
    if points.is_empty() {
        return domain("piecewise profile needs at least one point");
    }
    if points.windows(2).any(|w| !(w[1][0] > w[0][0])) {
        return domain("piecewise profile times must be strictly increasing");
    }
    Ok(())
}

impl PulseSchedule {
    /// Constant resonant drive, as used for two-atom Bell-state preparation.
    pub fn resonant(omega: f64, duration: f64) -> Self {
        Self { duration, rabi: RabiProfile::Constant { omega }, detuning: DetuningProfile::Constant { delta: 0.0 } }
    }

    /// Adiabatic sweep: ramped Rabi drive with a tangent detuning profile.
    pub fn sweep(omega_max: f64, delta_max: f64, duration: f64) -> Self {
        Self {
            duration,
            rabi: RabiProfile::Ramped { omega_max, ramp_fraction: 0.1 },
            detuning: DetuningProfile::Tangent { delta_max, shape: DEFAULT_TANGENT_SHAPE },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return domain(format!("duration must be positive, got {}", self.duration));
        }
        match &self.rabi {
            RabiProfile::Constant { omega } if !omega.is_finite() => return domain("non-finite Rabi frequency"),
            RabiProfile::Ramped { ramp_fraction, omega_max } => {
                if !(0.0..=0.5).contains(ramp_fraction) || !omega_max.is_finite() {
                    return domain(format!("ramp_fraction must lie in [0, 0.5], got {ramp_fraction}"));
                }
            }
            RabiProfile::Piecewise { points } => check_points(points)?,
            _ => {}
        }
        match &self.detuning {
            DetuningProfile::Tangent { shape, .. } => {
                tangent_detuning(0.0, 1.0, self.duration, *shape)?;
            }
            DetuningProfile::Piecewise { points } => check_points(points)?,
            DetuningProfile::Constant { delta } if !delta.is_finite() => return domain("non-finite detuning"),
            _ => {}
        }
        Ok(())
    }

    /// Rabi frequency (MHz) at `t`; `t` is clamped to the schedule.
    pub fn rabi(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.duration);
        match &self.rabi {
            RabiProfile::Constant { omega } => *omega,
            RabiProfile::Ramped { omega_max, ramp_fraction } => {
                let ramp = ramp_fraction * self.duration;
                if ramp <= 0.0 {
                    return *omega_max;
                }
                let edge = t.min(self.duration - t);
                if edge >= ramp {
                    *omega_max
                } else {
                    omega_max * (std::f64::consts::FRAC_PI_2 * edge / ramp).sin().powi(2)
                }
            }
            RabiProfile::Piecewise { points } => interpolate(points, t),
        }
    }

    /// Detuning (MHz) at `t`; `t` is clamped to the schedule.
    pub fn detuning(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.duration);
        match &self.detuning {
            DetuningProfile::Constant { delta } => *delta,
            DetuningProfile::Tangent { delta_max, shape } => tangent_unchecked(t, *delta_max, self.duration, *shape),
            DetuningProfile::Piecewise { points } => interpolate(points, t),
        }
    }

    /// Largest |Delta| reached, used for step-size heuristics.
    pub fn max_abs_detuning(&self) -> f64 {
        match &self.detuning {
            DetuningProfile::Constant { delta } => delta.abs(),
            DetuningProfile::Tangent { delta_max, .. } => delta_max.abs(),
            DetuningProfile::Piecewise { points } => points.iter().map(|p| p[1].abs()).fold(0.0, f64::max),
        }
    }

    /// `int_t0^t1 Omega(t)^2 dt` in MHz^2 us, by composite Simpson.
    pub fn rabi_squared_integral(&self, t0: f64, t1: f64) -> f64 {
        if t1 <= t0 {
            return 0.0;
        }
        let n = 256;
        let h = (t1 - t0) / n as f64;
        let f = |t: f64| self.rabi(t).powi(2);
        let mut s = f(t0) + f(t1);
        for k in 1..n {
            s += f(t0 + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn tangent_endpoints_and_midpoint() {
        assert_abs_diff_eq!(tangent_detuning(0.0, 30.0, 3.0, 1.1).unwrap(), 30.0, epsilon = 1e-12);
        assert_abs_diff_eq!(tangent_detuning(1.5, 30.0, 3.0, 1.1).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(tangent_detuning(3.0, 30.0, 3.0, 1.1).unwrap(), -30.0, epsilon = 1e-12);
        assert!(tangent_detuning(3.1, 30.0, 3.0, 1.1).is_err());
        assert!(tangent_detuning(-0.1, 30.0, 3.0, 1.1).is_err());
    }

    #[test]
    fn tangent_is_monotone_decreasing() {
        let mut last = f64::INFINITY;
        for k in 0..=300 {
            let d = tangent_detuning(k as f64 * 0.01, 30.0, 3.0, 1.1).unwrap();
            assert!(d < last);
            last = d;
        }
    }

    #[test]
    fn ramped_rabi_shape() {
        let s = PulseSchedule::sweep(5.6, 30.0, 3.0);
        assert_eq!(s.rabi(0.0), 0.0);
        assert_abs_diff_eq!(s.rabi(0.15), 5.6 * 0.5, epsilon = 1e-12);
        assert_eq!(s.rabi(1.5), 5.6);
        assert_abs_diff_eq!(s.rabi(3.0), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn piecewise_interpolates() {
        let s = PulseSchedule {
            duration: 2.0,
            rabi: RabiProfile::Piecewise { points: vec![[0.0, 0.0], [1.0, 2.0]] },
            detuning: DetuningProfile::Constant { delta: 1.0 },
        };
        assert_eq!(s.rabi(0.5), 1.0);
        assert_eq!(s.rabi(1.5), 2.0);
    }

    #[test]
    fn rabi_integral_of_constant() {
        let s = PulseSchedule::resonant(2.0, 1.0);
        assert_abs_diff_eq!(s.rabi_squared_integral(0.25, 0.75), 2.0, epsilon = 1e-12);
    }
}
