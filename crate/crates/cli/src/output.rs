//! Atomic file output with provenance.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use erasim_core::error::{Error, Result};
use erasim_core::experiment::Provenance;
use erasim_core::imaging::ShotBatch;
use serde::Serialize;

/// Write `bytes` to `path` through a temporary sibling and a rename, so an
/// interrupted run never leaves a truncated file under the final name.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    v.push(b'\n');
    Ok(v)
}

/// Sidecar of a CSV file: same stem, `.json` extension.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

#[derive(Serialize)]
struct Sidecar<'a, T: Serialize> {
    provenance: &'a Provenance,
    file: String,
    columns: &'a [&'a str],
    details: &'a T,
}

/// CSV text (header line first) prefixed with `#` provenance lines, plus
/// its JSON sidecar.
pub fn write_csv_with_sidecar<T: Serialize>(path: &Path, provenance: &Provenance, csv: &str, details: &T) -> Result<()> {
    let mut text = provenance.comment_lines();
    text.push_str(csv);
    write_atomic(path, text.as_bytes())?;
    let columns: Vec<&str> = csv.lines().next().unwrap_or("").split(',').collect();
    let file = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    write_atomic(&sidecar_path(path), &json_bytes(&Sidecar { provenance, file, columns: &columns, details })?)
}

/// Rows of comma-separated cells under a header.
pub struct Table {
    text: String,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { text: columns.join(",") + "\n" }
    }

    pub fn row<I: IntoIterator<Item = String>>(&mut self, cells: I) {
        let cells: Vec<String> = cells.into_iter().collect();
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

pub fn write_shots(path: &Path, batch: &ShotBatch, text_export: bool) -> Result<()> {
    let mut bin = Vec::new();
    batch.write_binary(&mut bin)?;
    write_atomic(path, &bin)?;
    if text_export {
        let mut tsv = Vec::new();
        batch.write_tsv(&mut tsv)?;
        write_atomic(&path.with_extension("tsv"), &tsv)?;
    }
    Ok(())
}

pub fn read_shots(path: &Path) -> Result<ShotBatch> {
    let f = fs::File::open(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    ShotBatch::read_binary(std::io::BufReader::new(f))
}

/// Shortest round-trip decimal (exponent form for tiny or huge values),
/// `NaN` for missing values.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:?}")
    } else {
        "NaN".into()
    }
}
