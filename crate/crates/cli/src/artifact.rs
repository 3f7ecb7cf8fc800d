//! On-disk artifacts: CSV formatting, atomic writes and stage manifests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PipelineError, Result};

/// Number formatting shared by every CSV artifact.
///
/// Shortest round-trip decimal; scientific notation when `|v| < 1e-4` or `|v| > 1e6`.
pub fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 {
        "0".to_string()
    } else if !v.is_finite() {
        format!("{v}")
    } else if !(1e-4..=1e6).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

/// CSV text with a header line, comma separation and a trailing newline.
#[derive(Clone, Debug)]
pub struct CsvTable {
    text: String,
    columns: usize,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self {
            text,
            columns: header.len(),
        }
    }

    pub fn row(&mut self, cells: &[f64]) {
        let cells: Vec<String> = cells.iter().map(|&v| fmt_num(v)).collect();
        self.row_text(&cells);
    }

    /// Row of preformatted cells (labels mixed with [`fmt_num`] output).
    pub fn row_text(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.columns);
        for (k, c) in cells.iter().enumerate() {
            if k > 0 {
                self.text.push(',');
            }
            let _ = write!(self.text, "{c}");
        }
        self.text.push('\n');
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.text.into_bytes()
    }
}

/// Header and rows of a CSV file.
pub struct CsvData {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvData {
    pub fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| PipelineError::artifact(path, e))?;
        let header = rdr
            .headers()
            .map_err(|e| PipelineError::artifact(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = rdr
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<Vec<Vec<String>>, _>>()
            .map_err(|e| PipelineError::artifact(path, e))?;
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Numeric columns `names` of every row.
    pub fn numbers(&self, path: &Path, names: &[&str]) -> Result<Vec<Vec<f64>>> {
        let idx = names
            .iter()
            .map(|n| self.column(n).ok_or_else(|| PipelineError::artifact(path, format!("missing column `{n}`"))))
            .collect::<Result<Vec<_>>>()?;
        self.rows
            .iter()
            .map(|row| {
                idx.iter()
                    .map(|&k| {
                        row.get(k)
                            .and_then(|s| s.parse::<f64>().ok())
                            .ok_or_else(|| PipelineError::artifact(path, format!("bad number in row {row:?}")))
                    })
                    .collect()
            })
            .collect()
    }
}

/// Write through a temporary sibling and rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact");
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes).map_err(|e| PipelineError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| PipelineError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| PipelineError::artifact(path, e))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::artifact(path, e))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

pub const MANIFEST: &str = "manifest.json";

/// Provenance of one stage unit: configuration hash plus hashes of inputs and outputs.
///
/// Paths are relative to the output root so that a moved tree stays valid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub unit: String,
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn path(root: &Path, unit: &str) -> PathBuf {
        root.join(unit).join(MANIFEST)
    }

    pub fn load(root: &Path, unit: &str) -> Option<Self> {
        read_json(&Self::path(root, unit)).ok()
    }

    /// True when the recorded configuration and every recorded file still match.
    pub fn is_fresh(&self, root: &Path, config_hash: &str, inputs: &BTreeMap<String, String>) -> bool {
        self.config_hash == config_hash
            && &self.inputs == inputs
            && self
                .outputs
                .iter()
                .all(|(rel, h)| sha256_file(&root.join(rel)).is_ok_and(|x| &x == h))
    }
}

pub fn relative(root: &Path, path: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}
