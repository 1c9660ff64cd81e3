//! Unit conventions.
//!
//! Configuration and reported values use MHz (cycles per microsecond) and
//! microseconds. The integrator works in angular units, rad/us, obtained by
//! multiplying every frequency by [`TWO_PI`].

pub const TWO_PI: f64 = std::f64::consts::TAU;

/// Cycles per microsecond to rad/us.
#[inline]
pub fn angular(mhz: f64) -> f64 {
    TWO_PI * mhz
}
