use nalgebra::DMatrix;
use num_complex::Complex64;

use super::basis::{site_bit, Basis};
use super::LatticeSpec;
use crate::error::{domain, Result};
use crate::units::angular;

/// Time-independent pieces of the chain Hamiltonian over one basis.
///
/// * drive: symmetric sparse pattern of single-site flips that stay inside
///   the basis; multiplied by `Omega/2` at evaluation time.
/// * `number_diag[s]`: number of excitations in state `s`.
/// * `interaction_diag[s]`: `sum_{i<j} V_ij n_i n_j` in rad/us.
#[derive(Clone, Debug)]
pub struct HamiltonianTerms {
    basis: Basis,
    row_start: Vec<usize>,
    cols: Vec<u32>,
    sites: Vec<u8>,
    number_diag: Vec<f64>,
    interaction_diag: Vec<f64>,
}

impl HamiltonianTerms {
    pub fn build(lattice: &LatticeSpec, basis: Basis) -> Result<Self> {
        lattice.validate()?;
        if lattice.n_atoms != basis.n_atoms() {
            return domain(format!("lattice has {} atoms, basis {}", lattice.n_atoms, basis.n_atoms()));
        }
        let n = lattice.n_atoms;
        let active: Vec<usize> = (0..n).filter(|&i| basis.is_active(i)).collect();
        let mut row_start = Vec::with_capacity(basis.len() + 1);
        let mut cols = Vec::new();
        let mut sites = Vec::new();
        let mut number_diag = Vec::with_capacity(basis.len());
        row_start.push(0);
        for &s in basis.states() {
            for &i in &active {
                if let Some(j) = basis.index_of(s ^ site_bit(n, i)) {
                    cols.push(j as u32);
                    sites.push(i as u8);
                }
            }
            row_start.push(cols.len());
            number_diag.push(s.count_ones() as f64);
        }
        let mut terms = Self { basis, row_start, cols, sites, number_diag, interaction_diag: Vec::new() };
        terms.interaction_diag = terms.interaction_with(lattice, |_, _| 1.0);
        Ok(terms)
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }
    pub fn dim(&self) -> usize {
        self.basis.len()
    }
    pub fn number_diag(&self) -> &[f64] {
        &self.number_diag
    }
    pub fn interaction_diag(&self) -> &[f64] {
        &self.interaction_diag
    }
    /// Number of stored drive entries (both triangles).
    pub fn drive_nnz(&self) -> usize {
        self.cols.len()
    }

    /// Drive entries of `row` as `(column, flipped site)`.
    #[inline]
    pub fn drive_row(&self, row: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let r = self.row_start[row]..self.row_start[row + 1];
        self.cols[r.clone()].iter().zip(&self.sites[r]).map(|(&c, &s)| (c as usize, s as usize))
    }

    pub(crate) fn csr(&self) -> (&[usize], &[u32], &[u8]) {
        (&self.row_start, &self.cols, &self.sites)
    }

    /// Interaction diagonal (rad/us) with every pair `V_ij` multiplied by
    /// `scale(i, j)`; used for position disorder.
    pub fn interaction_with(&self, lattice: &LatticeSpec, scale: impl Fn(usize, usize) -> f64) -> Vec<f64> {
        let n = lattice.n_atoms;
        let mut pair = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = angular(lattice.pair_mhz(i, j));
                if v != 0.0 {
                    pair[i * n + j] = v * scale(i, j);
                }
            }
        }
        let mut occ = Vec::with_capacity(n);
        self.basis
            .states()
            .iter()
            .map(|&s| {
                occ.clear();
                occ.extend((0..n).filter(|&i| s & site_bit(n, i) != 0));
                let mut e = 0.0;
                for (a, &i) in occ.iter().enumerate() {
                    for &j in &occ[a + 1..] {
                        e += pair[i * n + j];
                    }
                }
                e
            })
            .collect()
    }

    /// `out = H psi` for angular `omega` and `delta`.
    pub fn apply(&self, omega: f64, delta: f64, psi: &[Complex64], out: &mut [Complex64]) {
        let half = 0.5 * omega;
        for row in 0..self.dim() {
            let mut acc = psi[row] * (self.interaction_diag[row] - delta * self.number_diag[row]);
            for (c, _) in self.drive_row(row) {
                acc += psi[c] * half;
            }
            out[row] = acc;
        }
    }

    /// Dense real-symmetric matrix for angular `omega` and `delta`.
    pub fn dense(&self, omega: f64, delta: f64) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for row in 0..d {
            m[(row, row)] = self.interaction_diag[row] - delta * self.number_diag[row];
            for (c, _) in self.drive_row(row) {
                m[(row, c)] += 0.5 * omega;
            }
        }
        m
    }
}
