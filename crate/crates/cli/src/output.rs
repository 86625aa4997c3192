//! Long-format CSV tables and JSON documents, each stamped with provenance.

use std::fs;
use std::path::{Path, PathBuf};

use fqw_core::error::Error;
use serde::Serialize;

use crate::config::{ExperimentConfig, Tolerances};
use crate::{Failure, Result};

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub code_version: &'static str,
    pub tolerances: Tolerances,
}

impl Provenance {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            config_hash: cfg.hash(),
            code_version: CODE_VERSION,
            tolerances: cfg.tolerances,
        }
    }
}

/// Shortest round-trip decimal form; identical on every platform.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:e}")
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            header: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Writes the table with the provenance columns `config_hash, mode,
    /// cluster_tol, circle_tol, assumption_tol` in front of every row.
    pub fn write(&self, path: &Path, prov: &Provenance, mode: &str) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| io_error(path, e))?;
        let mut header = vec!["config_hash", "mode", "cluster_tol", "circle_tol", "assumption_tol"];
        header.extend(self.header.iter().map(String::as_str));
        w.write_record(&header).map_err(|e| io_error(path, e))?;
        let t = prov.tolerances;
        let prefix = [
            prov.config_hash.clone(),
            mode.to_string(),
            num(t.cluster),
            num(t.circle),
            num(t.assumption),
        ];
        for row in &self.rows {
            w.write_record(prefix.iter().chain(row)).map_err(|e| io_error(path, e))?;
        }
        w.flush().map_err(|e| io_error(path, e))
    }
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    provenance: &'a Provenance,
    config: &'a ExperimentConfig,
    #[serde(flatten)]
    body: &'a T,
}

pub fn write_json<T: Serialize>(path: &Path, prov: &Provenance, cfg: &ExperimentConfig, body: &T) -> Result<()> {
    let doc = Document {
        provenance: prov,
        config: cfg,
        body,
    };
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| Failure::from(Error::Numerical(e.to_string())))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_error(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    Ok(dir.to_path_buf())
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}
