//! Shot batch files.
//!
//! Binary layout (little endian):
//!
//! ```text
//! b"ERSHOTS1"
//! u32            header length H
//! H bytes        JSON header {format, n_atoms, n_shots, counts_e1, counts_e2, truth, metadata}
//! per shot:
//!   u64 shot_id, u64 seed, u64 trajectory, u64 e1, u64 e2, u64 e3
//!   [n_atoms x u16]  e1 photon counts   (if counts_e1)
//!   [n_atoms x u16]  e2 photon counts   (if counts_e2)
//!   [n_atoms x u8]   truth codes 0..=4  (if truth; g r p b d)
//! ```
//!
//! The text export has one tab-separated row per shot with images written
//! as bit strings (site 0 leftmost), counts as comma lists and truth as a
//! string over `grpbd`.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use super::shot::{ShotRecord, SiteTruth};
use crate::error::{Error, Result};
use crate::lattice::{format_bits, parse_bits};

pub const SHOT_MAGIC: &[u8; 8] = b"ERSHOTS1";

/// Shots sharing one chain length and optional columns.
#[derive(Clone, Debug, PartialEq)]
pub struct ShotBatch {
    pub n_atoms: usize,
    pub metadata: serde_json::Value,
    pub shots: Vec<ShotRecord>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    n_atoms: usize,
    n_shots: u64,
    counts_e1: bool,
    counts_e2: bool,
    truth: bool,
    metadata: serde_json::Value,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

impl ShotBatch {
    pub fn new(n_atoms: usize, metadata: serde_json::Value, shots: Vec<ShotRecord>) -> Self {
        Self { n_atoms, metadata, shots }
    }

    fn columns(&self) -> Result<(bool, bool, bool)> {
        let Some(first) = self.shots.first() else {
            return Ok((false, false, false));
        };
        let flags = (first.counts_e1.is_some(), first.counts_e2.is_some(), first.truth.is_some());
        for s in &self.shots {
            if (s.counts_e1.is_some(), s.counts_e2.is_some(), s.truth.is_some()) != flags {
                return Err(bad("shots disagree on optional columns"));
            }
            let lens = [s.counts_e1.as_ref().map(Vec::len), s.counts_e2.as_ref().map(Vec::len), s.truth.as_ref().map(Vec::len)];
            if lens.iter().flatten().any(|&l| l != self.n_atoms) {
                return Err(bad(format!("shot {} has a column of the wrong length", s.shot_id)));
            }
        }
        Ok(flags)
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let (c1, c2, truth) = self.columns()?;
        let header = Header {
            format: String::from_utf8_lossy(SHOT_MAGIC).into_owned(),
            n_atoms: self.n_atoms,
            n_shots: self.shots.len() as u64,
            counts_e1: c1,
            counts_e2: c2,
            truth,
            metadata: self.metadata.clone(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| bad(e.to_string()))?;
        w.write_all(SHOT_MAGIC)?;
        w.write_all(&(json.len() as u32).to_le_bytes())?;
        w.write_all(&json)?;
        let mut buf = Vec::with_capacity(48 + 5 * self.n_atoms);
        for s in &self.shots {
            buf.clear();
            for v in [s.shot_id, s.seed, s.trajectory, s.e1, s.e2, s.e3] {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            for c in [&s.counts_e1, &s.counts_e2].into_iter().flatten() {
                for k in c {
                    buf.extend_from_slice(&k.to_le_bytes());
                }
            }
            if let Some(t) = &s.truth {
                buf.extend(t.iter().map(|x| *x as u8));
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != SHOT_MAGIC {
            return Err(bad("not a shot batch (bad magic)"));
        }
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
        r.read_exact(&mut json)?;
        let h: Header = serde_json::from_slice(&json).map_err(|e| bad(e.to_string()))?;
        if h.n_atoms == 0 || h.n_atoms > 64 {
            return Err(bad(format!("n_atoms {} out of range", h.n_atoms)));
        }
        let n = h.n_atoms;
        let mut shots = Vec::with_capacity(h.n_shots.min(1 << 24) as usize);
        let mut u64s = [0u8; 48];
        for _ in 0..h.n_shots {
            r.read_exact(&mut u64s)?;
            let f = |k: usize| u64::from_le_bytes(u64s[8 * k..8 * k + 8].try_into().unwrap());
            let mut read_counts = |on: bool| -> Result<Option<Vec<u16>>> {
                if !on {
                    return Ok(None);
                }
                let mut raw = vec![0u8; 2 * n];
                r.read_exact(&mut raw)?;
                Ok(Some(raw.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect()))
            };
            let counts_e1 = read_counts(h.counts_e1)?;
            let counts_e2 = read_counts(h.counts_e2)?;
            let truth = if h.truth {
                let mut raw = vec![0u8; n];
                r.read_exact(&mut raw)?;
                Some(raw.iter().map(|&b| SiteTruth::from_byte(b).ok_or_else(|| bad("bad truth code"))).collect::<Result<_>>()?)
            } else {
                None
            };
            shots.push(ShotRecord {
                shot_id: f(0),
                seed: f(1),
                trajectory: f(2),
                e1: f(3),
                e2: f(4),
                e3: f(5),
                counts_e1,
                counts_e2,
                truth,
            });
        }
        Ok(Self { n_atoms: n, metadata: h.metadata, shots })
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        let (c1, c2, truth) = self.columns()?;
        writeln!(w, "# n_atoms: {}", self.n_atoms)?;
        writeln!(w, "# metadata: {}", self.metadata)?;
        write!(w, "shot_id\tseed\ttrajectory\te1\te2\te3")?;
        for (on, name) in [(c1, "counts_e1"), (c2, "counts_e2"), (truth, "truth")] {
            if on {
                write!(w, "\t{name}")?;
            }
        }
        writeln!(w)?;
        let join = |c: &[u16]| c.iter().map(u16::to_string).collect::<Vec<_>>().join(",");
        for s in &self.shots {
            let n = self.n_atoms;
            write!(w, "{}\t{}\t{}\t{}\t{}\t{}", s.shot_id, s.seed, s.trajectory, format_bits(s.e1, n), format_bits(s.e2, n), format_bits(s.e3, n))?;
            for c in [&s.counts_e1, &s.counts_e2].into_iter().flatten() {
                write!(w, "\t{}", join(c))?;
            }
            if let Some(t) = &s.truth {
                write!(w, "\t{}", t.iter().map(|x| x.code()).collect::<String>())?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(r: R) -> Result<Self> {
        let mut n_atoms = None;
        let mut metadata = serde_json::Value::Null;
        let mut columns: Option<Vec<String>> = None;
        let mut shots = Vec::new();
        for line in r.lines() {
            let line = line?;
            if let Some(rest) = line.strip_prefix("# n_atoms:") {
                n_atoms = Some(rest.trim().parse::<usize>().map_err(|e| bad(e.to_string()))?);
                continue;
            }
            if let Some(rest) = line.strip_prefix("# metadata:") {
                metadata = serde_json::from_str(rest.trim()).map_err(|e| bad(e.to_string()))?;
                continue;
            }
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let Some(cols) = &columns else {
                columns = Some(fields.iter().map(|s| s.to_string()).collect());
                continue;
            };
            if fields.len() != cols.len() {
                return Err(bad(format!("row has {} fields, header has {}", fields.len(), cols.len())));
            }
            let mut shot = ShotRecord::from_images(0, 0, 0, 0);
            for (name, v) in cols.iter().zip(&fields) {
                let num = || v.parse::<u64>().map_err(|e| bad(format!("{name}: {e}")));
                let image = |n_seen: &mut Option<usize>| -> Result<u64> {
                    let (bits, n) = parse_bits(v)?;
                    if n_seen.get_or_insert(n) != &n {
                        return Err(bad("images of different lengths"));
                    }
                    Ok(bits)
                };
                let counts = || -> Result<Vec<u16>> {
                    v.split(',').map(|c| c.parse::<u16>().map_err(|e| bad(format!("{name}: {e}")))).collect()
                };
                match name.as_str() {
                    "shot_id" => shot.shot_id = num()?,
                    "seed" => shot.seed = num()?,
                    "trajectory" => shot.trajectory = num()?,
                    "e1" => shot.e1 = image(&mut n_atoms)?,
                    "e2" => shot.e2 = image(&mut n_atoms)?,
                    "e3" => shot.e3 = image(&mut n_atoms)?,
                    "counts_e1" => shot.counts_e1 = Some(counts()?),
                    "counts_e2" => shot.counts_e2 = Some(counts()?),
                    "truth" => {
                        shot.truth = Some(
                            v.chars().map(|c| SiteTruth::from_code(c).ok_or_else(|| bad("bad truth code"))).collect::<Result<_>>()?,
                        )
                    }
                    other => return Err(bad(format!("unknown column {other}"))),
                }
            }
            shots.push(shot);
        }
        let n_atoms = n_atoms.ok_or_else(|| bad("chain length missing"))?;
        let batch = Self { n_atoms, metadata, shots };
        batch.columns()?;
        Ok(batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{image_shot, ImageSequence, ImagingModel, ReadoutModel, ShotModels};
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;

    fn batch(seed: u64, n_shots: usize, with_extras: bool) -> ShotBatch {
        let models = ShotModels {
            erasure: crate::imaging::manybody_imaging(),
            final_image: ImagingModel::perfect(),
            readout: ReadoutModel::default(),
            sequence: ImageSequence::Sweep,
            keep_counts: with_extras,
        };
        let mut rng = rng_from_seed(seed);
        let codes = [SiteTruth::Ground, SiteTruth::Rydberg, SiteTruth::PrepError, SiteTruth::BrightDecay, SiteTruth::DarkDecay];
        let shots = (0..n_shots as u64)
            .map(|k| {
                let truth: Vec<SiteTruth> = (0..7).map(|i| codes[(k as usize + i) % 5]).collect();
                let (e1, e2, e3, counts_e1, counts_e2) = image_shot(&truth, &models, &mut rng);
                ShotRecord {
                    shot_id: k,
                    seed: seed ^ k,
                    trajectory: k / 2,
                    e1,
                    e2,
                    e3,
                    counts_e1,
                    counts_e2,
                    truth: with_extras.then_some(truth),
                }
            })
            .collect();
        ShotBatch::new(7, serde_json::json!({"config_hash": "abc", "seed": seed}), shots)
    }

    proptest! {
        #[test]
        fn binary_roundtrip(seed in any::<u64>(), n in 0usize..40, extras in any::<bool>()) {
            let b = batch(seed, n, extras);
            let mut buf = Vec::new();
            b.write_binary(&mut buf).unwrap();
            prop_assert_eq!(ShotBatch::read_binary(buf.as_slice()).unwrap(), b);
        }

        #[test]
        fn text_roundtrip(seed in any::<u64>(), n in 1usize..40, extras in any::<bool>()) {
            let b = batch(seed, n, extras);
            let mut buf = Vec::new();
            b.write_tsv(&mut buf).unwrap();
            prop_assert_eq!(ShotBatch::read_tsv(buf.as_slice()).unwrap(), b);
        }
    }

    #[test]
    fn rejects_foreign_files() {
        assert!(matches!(ShotBatch::read_binary(&b"NOTSHOTSxxxx"[..]), Err(Error::Format(_))));
        let b = batch(1, 3, true);
        let mut buf = Vec::new();
        b.write_binary(&mut buf).unwrap();
        buf.truncate(buf.len() - 1);
        assert!(ShotBatch::read_binary(buf.as_slice()).is_err());
    }
}
