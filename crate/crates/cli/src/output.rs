use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::HarnessError;

/// 17 significant digits, enough to round-trip any f64.
pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

/// In-memory CSV table.
#[derive(Debug, Clone)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
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

    pub fn to_bytes(&self) -> Result<Vec<u8>, HarnessError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| HarnessError::Io(std::io::Error::other(e));
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        w.into_inner().map_err(|e| HarnessError::Io(std::io::Error::other(e.to_string())))
    }
}

/// Everything one run produces.
#[derive(Debug)]
pub struct RunOutput {
    pub tables: Vec<(&'static str, Table)>,
    pub summary: serde_json::Value,
    /// Human-readable result lines for the terminal.
    pub report: Vec<String>,
}

pub fn summary_json<T: Serialize>(value: &T) -> Result<serde_json::Value, HarnessError> {
    Ok(serde_json::to_value(value)?)
}

/// Writes every table and `summary.json` into `dir`. On a failed write the
/// files already written are removed again.
pub fn write_run(dir: &Path, run: &RunOutput) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir)?;
    let mut files: Vec<(PathBuf, Vec<u8>)> = Vec::new();
    for (name, table) in &run.tables {
        files.push((dir.join(name), table.to_bytes()?));
    }
    let mut json = serde_json::to_vec_pretty(&run.summary)?;
    json.push(b'\n');
    files.push((dir.join("summary.json"), json));

    let mut written = Vec::new();
    for (path, bytes) in files {
        if let Err(e) = fs::write(&path, bytes) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            let _ = fs::remove_file(&path);
            return Err(e.into());
        }
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, -1.0 / 3.0, 6.02214076e23, 5e-324] {
            assert_eq!(float(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn table_has_header_and_rows() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1".into(), float(0.5)]);
        let s = String::from_utf8(t.to_bytes().unwrap()).unwrap();
        assert_eq!(s, "a,b\n1,5.0000000000000000e-1\n");
    }
}
