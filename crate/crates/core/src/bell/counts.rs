use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::beta::BetaDist;
use super::bound::{GG, GR, RG, RR};
use crate::error::{domain, Error, Result};

/// Which extremum of the blockaded oscillation a point samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Pi,
    TwoPi,
}

/// Outcome counts of a pair measurement at one drive time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationPoint {
    /// Drive duration (us).
    pub time: f64,
    /// Counts ordered `gg, gr, rg, rr`.
    pub counts: [u64; 4],
    pub n_shots: u64,
    pub window: Option<Window>,
}

impl PopulationPoint {
    pub fn new(time: f64, counts: [u64; 4]) -> Self {
        Self { time, counts, n_shots: counts.iter().sum(), window: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.counts.iter().sum::<u64>() != self.n_shots {
            return domain(format!("counts at t = {} do not sum to {}", self.time, self.n_shots));
        }
        if self.n_shots == 0 || !self.time.is_finite() {
            return domain(format!("empty or non-finite point at t = {}", self.time));
        }
        Ok(())
    }

    pub fn single_excitation(&self) -> u64 {
        self.counts[GR] + self.counts[RG]
    }

    /// Posterior of `P_gr + P_rg`.
    pub fn single_excitation_beta(&self) -> BetaDist {
        BetaDist::from_counts(self.single_excitation(), self.n_shots).expect("validated counts")
    }

    /// Posterior of outcome `k`.
    pub fn outcome_beta(&self, k: usize) -> BetaDist {
        BetaDist::from_counts(self.counts[k], self.n_shots).expect("validated counts")
    }
}

/// Outcome index for sites `a`, `b` of a final image; a set bit is an atom
/// found in `|g>`.
pub fn pair_outcome(e3: u64, n_atoms: usize, a: usize, b: usize) -> usize {
    let r = |i| usize::from(e3 & crate::lattice::site_bit(n_atoms, i) == 0);
    2 * r(a) + r(b)
}

#[derive(Serialize, Deserialize)]
struct Row {
    time: f64,
    gg: u64,
    gr: u64,
    rg: u64,
    rr: u64,
    n: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    window: Option<Window>,
}

pub fn write_count_table<W: Write>(points: &[PopulationPoint], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for p in points {
        out.serialize(Row {
            time: p.time,
            gg: p.counts[GG],
            gr: p.counts[GR],
            rg: p.counts[RG],
            rr: p.counts[RR],
            n: p.n_shots,
            window: p.window,
        })
        .map_err(|e| Error::Format(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads `time,gg,gr,rg,rr,n[,window]`; lines starting with `#` are skipped.
pub fn read_count_table<R: Read>(r: R) -> Result<Vec<PopulationPoint>> {
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r);
    let mut points = Vec::new();
    for row in rd.deserialize::<Row>() {
        let row = row.map_err(|e| Error::Format(e.to_string()))?;
        let p = PopulationPoint { time: row.time, counts: [row.gg, row.gr, row.rg, row.rr], n_shots: row.n, window: row.window };
        p.validate()?;
        points.push(p);
    }
    Ok(points)
}

/// Split points into the pi and 2 pi windows. Explicit labels win;
/// otherwise times are cut at the widest gap.
pub fn split_windows(points: &[PopulationPoint]) -> Result<(Vec<PopulationPoint>, Vec<PopulationPoint>)> {
    if points.iter().all(|p| p.window.is_some()) && !points.is_empty() {
        let pick = |w| points.iter().filter(|p| p.window == Some(w)).cloned().collect::<Vec<_>>();
        return Ok((pick(Window::Pi), pick(Window::TwoPi)));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.time.total_cmp(&b.time));
    if sorted.len() < 2 {
        return domain("need points in two windows");
    }
    let cut = (1..sorted.len())
        .max_by(|&i, &j| (sorted[i].time - sorted[i - 1].time).total_cmp(&(sorted[j].time - sorted[j - 1].time)))
        .expect("at least two points");
    let two_pi = sorted.split_off(cut);
    let label = |v: Vec<PopulationPoint>, w| v.into_iter().map(|p| PopulationPoint { window: Some(w), ..p }).collect();
    Ok((label(sorted, Window::Pi), label(two_pi, Window::TwoPi)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_outcomes_follow_population_order() {
        assert_eq!(pair_outcome(0b11, 2, 0, 1), GG);
        assert_eq!(pair_outcome(0b10, 2, 0, 1), GR);
        assert_eq!(pair_outcome(0b01, 2, 0, 1), RG);
        assert_eq!(pair_outcome(0b00, 2, 0, 1), RR);
    }

    #[test]
    fn table_roundtrip_and_split() {
        let mut pts = vec![
            PopulationPoint::new(0.08, [10, 45, 44, 1]),
            PopulationPoint::new(0.09, [5, 48, 47, 0]),
            PopulationPoint::new(0.18, [96, 2, 2, 0]),
            PopulationPoint::new(0.19, [97, 1, 2, 0]),
        ];
        let mut buf = Vec::new();
        write_count_table(&pts, &mut buf).unwrap();
        assert_eq!(read_count_table(buf.as_slice()).unwrap(), pts);
        let (pi, two) = split_windows(&pts).unwrap();
        assert_eq!(pi.len(), 2);
        assert!(two.iter().all(|p| p.time > 0.15 && p.window == Some(Window::TwoPi)));
        pts[0].window = Some(Window::TwoPi);
        assert!(read_count_table("time,gg,gr,rg,rr,n\n0.1,1,2,3,4,11\n".as_bytes()).is_err());
    }
}
