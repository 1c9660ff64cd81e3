use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Outcome probabilities of a pair, ordered `gg, gr, rg, rr`.
pub type Populations = [f64; 4];

pub const GG: usize = 0;
pub const GR: usize = 1;
pub const RG: usize = 2;
pub const RR: usize = 3;

/// Tolerance on `sum = 1` for population vectors.
pub const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub value: f64,
    /// The radicand was negative and replaced by zero.
    pub clipped: bool,
}

pub fn check_simplex(p: &Populations) -> Result<()> {
    if p.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return domain(format!("populations {p:?} leave [0, 1]"));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOL {
        return domain(format!("populations {p:?} sum to {s}"));
    }
    Ok(())
}

/// Lower bound on the `|Psi+>` fidelity from the single-excitation
/// populations at the pi time and the full populations at the 2 pi time:
///
/// `(P_gr + P_rg)/2 + sqrt((sum_i P_i(2pi)^2 - 1)/2 + P_gr P_rg)`, with
/// the radicand clipped at zero.
pub fn bell_bound(pi_gr: f64, pi_rg: f64, two_pi: &Populations) -> Result<BoundValue> {
    if !(0.0..=1.0).contains(&pi_gr) || !(0.0..=1.0).contains(&pi_rg) || pi_gr + pi_rg > 1.0 + SIMPLEX_TOL {
        return domain(format!("pi-time populations ({pi_gr}, {pi_rg}) are not probabilities"));
    }
    check_simplex(two_pi)?;
    Ok(bell_bound_unchecked(pi_gr, pi_rg, two_pi))
}

pub(crate) fn bell_bound_unchecked(pi_gr: f64, pi_rg: f64, two_pi: &Populations) -> BoundValue {
    let sum_sq: f64 = two_pi.iter().map(|p| p * p).sum();
    let radicand = 0.5 * (sum_sq - 1.0) + pi_gr * pi_rg;
    BoundValue { value: 0.5 * (pi_gr + pi_rg) + radicand.max(0.0).sqrt(), clipped: radicand < 0.0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_pair() {
        let b = bell_bound(0.5, 0.5, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(b.value, 1.0);
        assert!(!b.clipped);
    }

    #[test]
    fn near_perfect_pair() {
        // 0.498 + sqrt((0.994^2 + 2 * 0.003^2 - 1)/2 + 0.498^2)
        let b = bell_bound(0.498, 0.498, &[0.994, 0.003, 0.003, 0.0]).unwrap();
        assert!((b.value - 0.989_966_462_271_565_8).abs() < 1e-12, "{}", b.value);
        assert!((b.value - 0.98997).abs() < 5e-6);
    }

    #[test]
    fn negative_radicand_is_clipped() {
        let b = bell_bound(0.25, 0.25, &[0.25; 4]).unwrap();
        assert_eq!(b.value, 0.25);
        assert!(b.clipped);
    }

    #[test]
    fn rejects_non_probabilities() {
        assert!(bell_bound(0.6, 0.6, &[1.0, 0.0, 0.0, 0.0]).is_err());
        assert!(bell_bound(0.5, 0.5, &[0.9, 0.0, 0.0, 0.0]).is_err());
        assert!(bell_bound(-0.1, 0.5, &[1.0, 0.0, 0.0, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn symmetric_in_single_excitations(a in 0.0..0.5f64, b in 0.0..0.5f64, w in proptest::array::uniform4(0.0..1.0f64)) {
            let s: f64 = w.iter().sum::<f64>() + 1e-12;
            let p = [w[0] / s, w[1] / s, w[2] / s, w[3] / s];
            let s2: f64 = p.iter().sum();
            let p = [p[0] / s2, p[1] / s2, p[2] / s2, p[3] / s2];
            let x = bell_bound_unchecked(a, b, &p);
            let y = bell_bound_unchecked(b, a, &[p[0], p[2], p[1], p[3]]);
            prop_assert_eq!(x, y);
        }
    }
}
