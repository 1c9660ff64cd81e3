use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{domain, Result};
use crate::lattice::{site_bit, Basis, BasisKind, HamiltonianTerms, LatticeSpec};
use crate::units::angular;

/// Largest chain handled by the dense spectrum.
pub const MAX_DENSE_ATOMS: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct GapScan {
    /// Detunings (MHz).
    pub deltas: Vec<f64>,
    /// Gap between the two highest reflection-symmetric levels (MHz).
    pub gaps: Vec<f64>,
    pub min_index: usize,
}

impl GapScan {
    pub fn min_delta(&self) -> f64 {
        self.deltas[self.min_index]
    }
    pub fn min_gap(&self) -> f64 {
        self.gaps[self.min_index]
    }
}

fn reflect(s: u64, n: usize) -> u64 {
    s.reverse_bits() >> (64 - n)
}

/// Projector onto the reflection-even sector as columns over `basis`.
fn even_sector(basis: &Basis) -> Vec<Vec<(usize, f64)>> {
    let n = basis.n_atoms();
    let mut cols = Vec::new();
    for (i, &s) in basis.states().iter().enumerate() {
        let r = reflect(s, n);
        if r == s {
            cols.push(vec![(i, 1.0)]);
        } else if s < r {
            let j = basis.index_of(r).expect("basis is reflection symmetric");
            let c = std::f64::consts::FRAC_1_SQRT_2;
            cols.push(vec![(i, c), (j, c)]);
        }
    }
    cols
}

/// Gap of the highest-energy level to the next level of the same reflection
/// parity over a detuning scan at fixed Rabi frequency, blockaded basis.
///
/// The highest level is the one adiabatically followed from `|g...g>` at
/// large positive detuning.
pub fn minimum_gap_scan(lattice: &LatticeSpec, omega: f64, delta_lo: f64, delta_hi: f64, points: usize) -> Result<GapScan> {
    lattice.validate()?;
    if lattice.n_atoms > MAX_DENSE_ATOMS {
        return domain(format!("dense gap scan supports at most {MAX_DENSE_ATOMS} atoms"));
    }
    if points < 2 || !(delta_hi > delta_lo) {
        return domain("need at least two points on an increasing detuning range");
    }
    let basis = Basis::chain(BasisKind::Blockaded, lattice.n_atoms)?;
    let n = lattice.n_atoms;
    let terms = HamiltonianTerms::build(lattice, basis)?;
    let sector = even_sector(terms.basis());
    let dim = sector.len();
    if dim < 2 {
        return domain("symmetric sector has fewer than two states");
    }
    // Project the three operator pieces once.
    let project = |h: &DMatrix<f64>| {
        let mut out = DMatrix::zeros(dim, dim);
        for (a, ca) in sector.iter().enumerate() {
            for (b, cb) in sector.iter().enumerate() {
                let mut acc = 0.0;
                for &(i, wi) in ca {
                    for &(j, wj) in cb {
                        acc += wi * wj * h[(i, j)];
                    }
                }
                out[(a, b)] = acc;
            }
        }
        out
    };
    let drive = project(&terms.dense(angular(omega), 0.0));
    let counts = {
        let d = terms.dim();
        let mut m = DMatrix::zeros(d, d);
        for (k, &s) in terms.basis().states().iter().enumerate() {
            m[(k, k)] = (0..n).filter(|&i| s & site_bit(n, i) != 0).count() as f64;
        }
        project(&m)
    };
    let deltas: Vec<f64> = (0..points).map(|k| delta_lo + (delta_hi - delta_lo) * k as f64 / (points - 1) as f64).collect();
    let gaps: Vec<f64> = deltas
        .iter()
        .map(|&d| {
            let h = &drive - &counts * angular(d);
            let mut e: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
            e.sort_by(|a, b| b.total_cmp(a));
            (e[0] - e[1]) / crate::units::TWO_PI
        })
        .collect();
    let min_index = gaps
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    Ok(GapScan { deltas, gaps, min_index })
}
