use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use num_complex::Complex64;

use crate::error::{domain, Result};
use crate::units::TWO_PI;

/// Above this `eta` the second-order expansion is flagged as inaccurate.
pub const ETA_ACCURACY_LIMIT: f64 = 0.2;

/// Resonant two-atom drive restricted to the symmetric sector
/// `{|gg>, |Psi+>, |rr>}`, `|Psi+> = (|gr> + |rg>)/sqrt 2`. Frequencies in MHz.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvenParityBlock {
    pub omega: f64,
    pub v: f64,
}

impl EvenParityBlock {
    pub fn new(omega: f64, v: f64) -> Result<Self> {
        if !(omega > 0.0) || !(v > 0.0) || !omega.is_finite() || !v.is_finite() {
            return domain(format!("need Omega > 0 and V > 0, got {omega}, {v}"));
        }
        Ok(Self { omega, v })
    }

    /// `eta = Omega / (sqrt 2 V)`.
    pub fn eta(&self) -> f64 {
        self.omega / (std::f64::consts::SQRT_2 * self.v)
    }

    /// Block matrix in MHz.
    pub fn matrix(&self) -> Matrix3<f64> {
        let c = self.omega / std::f64::consts::SQRT_2;
        Matrix3::new(0.0, c, 0.0, c, 0.0, c, 0.0, c, self.v)
    }

    /// Eigenvalues (ascending) and matching eigenvectors.
    pub fn exact(&self) -> ([f64; 3], [Vector3<f64>; 3]) {
        let eig = SymmetricEigen::new(self.matrix());
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        (idx.map(|i| eig.eigenvalues[i]), idx.map(|i| eig.eigenvectors.column(i).into_owned()))
    }

    /// `|<Psi+| exp(-i H t) |gg>|^2` with `t` in us.
    pub fn bell_fidelity_at(&self, t: f64) -> f64 {
        let (e, v) = self.exact();
        let mut amp = Complex64::default();
        for k in 0..3 {
            let phase = Complex64::from_polar(1.0, -TWO_PI * e[k] * t);
            amp += phase * v[k][0] * v[k][1];
        }
        amp.norm_sqr()
    }

    /// `|<gg| exp(-i H t) |gg>|^2` with `t` in us.
    pub fn ground_return_at(&self, t: f64) -> f64 {
        let (e, v) = self.exact();
        let mut amp = Complex64::default();
        for k in 0..3 {
            amp += Complex64::from_polar(1.0, -TWO_PI * e[k] * t) * v[k][0] * v[k][0];
        }
        amp.norm_sqr()
    }
}

/// Second-order perturbative eigensystem in the symmetric sector.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbativeEigen {
    pub eta: f64,
    /// Energies in MHz, ordered as the vectors.
    pub energies: [f64; 3],
    /// Coefficients on `(|gg>, |Psi+>, |rr>)`, as printed by the expansion.
    pub vectors: [[f64; 3]; 3],
    /// Set when `eta >= ETA_ACCURACY_LIMIT`.
    pub accuracy_warning: bool,
}

pub fn perturbative_eigen(omega: f64, v: f64) -> Result<PerturbativeEigen> {
    let block = EvenParityBlock::new(omega, v)?;
    let e = block.eta();
    let e2 = e * e;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Ok(PerturbativeEigen {
        eta: e,
        // The upper level shifts by the full eta^2 V: the three energies must sum
        // to the trace V.
        energies: [v * (-e - e2 / 2.0), v * (e - e2 / 2.0), v * (1.0 + e2)],
        vectors: [
            [s * (1.0 - e / 4.0 - e2 / 32.0), s * (-1.0 - e / 4.0 + 17.0 * e2 / 32.0), s * (e - 3.0 * e2 / 4.0)],
            [s * (-1.0 - e / 4.0 + e2 / 32.0), s * (-1.0 + e / 4.0 + 17.0 * e2 / 32.0), s * (e + 3.0 * e2 / 4.0)],
            [e2, e, 1.0],
        ],
        accuracy_warning: e >= ETA_ACCURACY_LIMIT,
    })
}

/// Leading-order maximal Bell fidelity `1 - (5/8)(Omega/V)^2`, reached at
/// `t* = pi / (sqrt 2 Omega)` (angular Omega). Returns `(F, t*)` with `t*` in us.
pub fn bell_fidelity_closed_form(omega: f64, v: f64) -> Result<(f64, f64)> {
    EvenParityBlock::new(omega, v)?;
    let r = omega / v;
    let t_star = std::f64::consts::PI / (std::f64::consts::SQRT_2 * TWO_PI * omega);
    Ok((1.0 - 0.625 * r * r, t_star))
}

/// Golden-section maximum of `f` on `[a, b]`.
pub(crate) fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    (t, f(t))
}

/// Maximal Bell fidelity of the exact symmetric-sector dynamics near the
/// first pi time. Returns `(F_max, t_max)`.
pub fn exact_max_bell_fidelity(omega: f64, v: f64) -> Result<(f64, f64)> {
    let block = EvenParityBlock::new(omega, v)?;
    let (_, t0) = bell_fidelity_closed_form(omega, v)?;
    let (t, f) = golden_max(|t| block.bell_fidelity_at(t), 0.7 * t0, 1.3 * t0, 1e-12 * t0);
    Ok((f, t))
}

/// First return to `|gg>` of the exact symmetric-sector dynamics, searched
/// around twice the pi time. Returns `(P_gg, t)`.
pub fn exact_two_pi_time(omega: f64, v: f64) -> Result<(f64, f64)> {
    let block = EvenParityBlock::new(omega, v)?;
    let (_, t0) = bell_fidelity_closed_form(omega, v)?;
    let (t, p) = golden_max(|t| block.ground_return_at(t), 1.6 * t0, 2.4 * t0, 1e-12 * t0);
    Ok((p, t))
}
