//! Result persistence: one CSV data file plus one JSON summary per run, the
//! summary carrying the full reproducibility manifest. Wall-clock time goes
//! to stderr only, so identical manifests reproduce identical bytes.

use crate::config::ExperimentConfig;
use hermite_core::{HermiteError, Result};
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize)]
pub struct ResultManifest {
    pub tool_version: String,
    pub subcommand: String,
    pub config_hash: String,
    /// Canonical config text, verbatim; re-running it reproduces the files.
    pub config: String,
    pub seed: u64,
    /// RNG streams consumed, as [first, last+1) ranges of the seed's
    /// counter-based stream space.
    pub stream_ranges: Vec<[u64; 2]>,
    pub pass: bool,
}

impl ResultManifest {
    pub fn new(
        subcommand: &str,
        cfg: &ExperimentConfig,
        stream_ranges: Vec<[u64; 2]>,
        pass: bool,
    ) -> ResultManifest {
        ResultManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            config_hash: cfg.hash(),
            config: cfg.canonical(),
            seed: cfg.seed,
            stream_ranges,
            pass,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Summary<T: Serialize> {
    pub manifest: ResultManifest,
    pub csv_file: String,
    pub columns: Vec<String>,
    pub results: T,
}

/// Shortest-roundtrip decimal; deterministic across platforms for f64.
pub fn fmt_num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}

pub struct CsvTable {
    pub columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(columns: &[&str]) -> CsvTable {
        CsvTable { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "row width mismatch");
        self.rows.push(row);
    }

    fn render(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path)
        .map_err(|e| HermiteError::Resource(format!("cannot create {}: {e}", path.display())))?;
    f.write_all(bytes)
        .map_err(|e| HermiteError::Resource(format!("cannot write {}: {e}", path.display())))
}

/// Writes `<name>.csv` and `<name>_summary.json` under `out_dir`.
pub fn persist<T: Serialize>(
    out_dir: &Path,
    name: &str,
    table: &CsvTable,
    manifest: ResultManifest,
    results: T,
) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(out_dir).map_err(|e| {
        HermiteError::Resource(format!("cannot create {}: {e}", out_dir.display()))
    })?;
    let csv_path = out_dir.join(format!("{name}.csv"));
    let json_path = out_dir.join(format!("{name}_summary.json"));
    write_file(&csv_path, table.render().as_bytes())?;
    let summary = Summary {
        manifest,
        csv_file: format!("{name}.csv"),
        columns: table.columns.clone(),
        results,
    };
    let mut text = serde_json::to_string_pretty(&summary)
        .map_err(|e| HermiteError::Resource(format!("summary serialization failed: {e}")))?;
    text.push('\n');
    write_file(&json_path, text.as_bytes())?;
    Ok((csv_path, json_path))
}
