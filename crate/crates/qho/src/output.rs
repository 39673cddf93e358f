//! CSV and JSON artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Shortest representation that parses back to the same bits; exponent form
/// for very small or very large magnitudes.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e16).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// A header plus numeric rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Table {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(|x| fmt_f64(*x))).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
    }
}

/// Reads a numeric CSV written by [`Table::to_csv`].
pub fn read_csv(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let header = r
        .headers()
        .map_err(|e| CliError::Config(e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::Config(e.to_string()))?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| CliError::Config(format!("{s}: {e}"))))
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// One written file and its digest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
}

/// Writes into an output directory and records hashes.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    artifacts: Vec<Artifact>,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> CliResult<PathBuf> {
        let path = self.root.join(name);
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        self.artifacts.push(Artifact {
            file: name.to_string(),
            sha256: sha256_hex(contents),
        });
        Ok(path)
    }

    pub fn write_table(&mut self, name: &str, table: &Table) -> CliResult<PathBuf> {
        self.write(name, table.to_csv().as_bytes())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Writes a file that lists the digests of everything written so far;
    /// it is not itself recorded.
    pub fn write_manifest<T: Serialize>(&self, name: &str, value: &T) -> CliResult<PathBuf> {
        let path = self.root.join(name);
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn artifacts(&self) -> &[Artifact] {
        &self.artifacts
    }
}

/// `omega0 t` rendered for file names, e.g. `4.7124`.
pub fn time_tag(wt: f64) -> String {
    format!("{wt:.4}")
}
