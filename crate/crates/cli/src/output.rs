//! Atomic CSV/JSON artifacts.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::CliError;

/// Version of the CSV layouts, recorded in every JSON document.
pub const CSV_VERSION: u32 = 1;

pub const ESTIMATE_HEADER: &[&str] = &[
    "task", "estimator", "label", "mean", "std_error", "n", "method", "bias_bound", "ci_low", "ci_high",
    "master_seed", "config_digest",
];

pub const CONVERGENCE_HEADER: &[&str] = &[
    "task", "table", "eps", "estimate", "reference", "abs_error", "combined_se", "support_failure_fraction",
    "master_seed", "config_digest",
];

pub const ENVELOPE_HEADER: &[&str] = &[
    "task", "measure_level", "raw_min", "raw_lower", "envelope", "envelope_lower", "sets", "points", "n",
    "master_seed", "config_digest",
];

/// A header plus rows of already formatted cells.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(|e| CliError::Io(e.to_string()))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| CliError::Io(e.to_string()))?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.to_string()))
    }
}

/// Writes `bytes` to `dir/name` through a temporary file in the same
/// directory, so readers never observe a partial file.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    let path = dir.join(name);
    tmp.persist(&path).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quotes_and_overwrites() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["x, y".into(), "1".into()]);
        let p = write_atomic(dir.path(), "t.csv", &t.to_csv().unwrap()).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "a,b\n\"x, y\",1\n");
        write_atomic(dir.path(), "t.csv", b"new").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "new");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
