use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Default cap on the number of basis states.
pub const DEFAULT_STATE_BUDGET: usize = 1 << 24;

/// Bit holding site `site` of an `n`-site bitstring. Site 0 is the most
/// significant bit, so numeric order equals lexicographic string order.
#[inline]
pub fn site_bit(n: usize, site: usize) -> u64 {
    1u64 << (n - 1 - site)
}

/// Render a bitmask as a string of `0`/`1`, site 0 first.
pub fn format_bits(mask: u64, n: usize) -> String {
    (0..n).map(|i| if mask & site_bit(n, i) != 0 { '1' } else { '0' }).collect()
}

pub fn parse_bits(s: &str) -> Result<(u64, usize)> {
    let n = s.len();
    if n == 0 || n > 64 {
        return Err(Error::Format(format!("bitstring length {n} outside 1..=64")));
    }
    let mut mask = 0u64;
    for (i, c) in s.chars().enumerate() {
        match c {
            '0' => {}
            '1' => mask |= site_bit(n, i),
            _ => return Err(Error::Format(format!("invalid bitstring character {c:?}"))),
        }
    }
    Ok((mask, n))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    /// All `2^N` configurations.
    Full,
    /// Configurations without adjacent excitations.
    Blockaded,
}

/// Basis choice for a full chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub kind: BasisKind,
    pub n_atoms: usize,
}

fn fibonacci(k: usize) -> u128 {
    let (mut a, mut b) = (0u128, 1u128);
    for _ in 0..k {
        let c = a + b;
        a = b;
        b = c;
    }
    a
}

impl BasisSpec {
    /// Number of states: `2^N` or the Fibonacci number `F(N+2)`.
    pub fn dimension(&self) -> u128 {
        match self.kind {
            BasisKind::Full => 1u128 << self.n_atoms,
            BasisKind::Blockaded => fibonacci(self.n_atoms + 2),
        }
    }

    pub fn build(&self) -> Result<Basis> {
        Basis::new(self.kind, self.n_atoms, full_mask(self.n_atoms), DEFAULT_STATE_BUDGET)
    }
}

pub(crate) fn full_mask(n: usize) -> u64 {
    if n == 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// Ordered computational basis over the active sites of an `n_atoms` chain.
///
/// Inactive sites (lost or never prepared) are pinned to 0. States are sorted
/// ascending, which is lexicographic order with site 0 leftmost.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Basis {
    kind: BasisKind,
    n_atoms: usize,
    active: u64,
    states: Vec<u64>,
}

impl Basis {
    pub fn new(kind: BasisKind, n_atoms: usize, active: u64, budget: usize) -> Result<Self> {
        if n_atoms == 0 || n_atoms > 64 {
            return domain(format!("n_atoms must be in 1..=64, got {n_atoms}"));
        }
        let active = active & full_mask(n_atoms);
        let bound = BasisSpec { kind, n_atoms: active.count_ones() as usize }.dimension();
        if bound > budget as u128 {
            return Err(Error::Capacity { n_atoms, states: bound, budget });
        }
        let states = match kind {
            BasisKind::Full => {
                let mut v = Vec::with_capacity(bound as usize);
                let mut s = 0u64;
                loop {
                    v.push(s);
                    if s == active {
                        break;
                    }
                    s = s.wrapping_sub(active) & active;
                }
                v
            }
            BasisKind::Blockaded => {
                let mut v = Vec::with_capacity(bound as usize);
                blockaded_dfs(n_atoms, active, 0, 0, &mut v);
                v
            }
        };
        Ok(Self { kind, n_atoms, active, states })
    }

    pub fn chain(kind: BasisKind, n_atoms: usize) -> Result<Self> {
        BasisSpec { kind, n_atoms }.build()
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }
    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }
    pub fn active_mask(&self) -> u64 {
        self.active
    }
    pub fn is_active(&self, site: usize) -> bool {
        self.active & site_bit(self.n_atoms, site) != 0
    }
    pub fn len(&self) -> usize {
        self.states.len()
    }
    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
    pub fn states(&self) -> &[u64] {
        &self.states
    }
    pub fn state(&self, index: usize) -> u64 {
        self.states[index]
    }
    pub fn index_of(&self, state: u64) -> Option<usize> {
        self.states.binary_search(&state).ok()
    }
    #[inline]
    pub fn occupied(&self, state: u64, site: usize) -> bool {
        state & site_bit(self.n_atoms, site) != 0
    }

    /// Newline-delimited bitstrings in basis order.
    pub fn export<W: Write>(&self, mut w: W) -> io::Result<()> {
        for &s in &self.states {
            writeln!(w, "{}", format_bits(s, self.n_atoms))?;
        }
        Ok(())
    }
}

fn blockaded_dfs(n: usize, active: u64, site: usize, prefix: u64, out: &mut Vec<u64>) {
    if site == n {
        out.push(prefix);
        return;
    }
    blockaded_dfs(n, active, site + 1, prefix, out);
    let bit = site_bit(n, site);
    let left_free = site == 0 || prefix & site_bit(n, site - 1) == 0;
    if active & bit != 0 && left_free {
        blockaded_dfs(n, active, site + 1, prefix | bit, out);
    }
}
