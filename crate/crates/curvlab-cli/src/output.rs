//! Reports, CSV tables and atomic file writes.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use curvlab::genfun::Check;
use serde::Serialize;
use serde_json::{json, Map, Value};

/// Write through a temporary file in the target directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Column table rendered as RFC-4180 CSV.
#[derive(Clone, Debug)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Shortest decimal that reads back to the same `f64`.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:?}")
    } else {
        String::new()
    }
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn push_nums(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&x| num(x)).collect());
    }

    /// Columns of equal length.
    pub fn from_columns(header: &[&str], cols: &[&[f64]]) -> Self {
        let mut t = Self::new(header);
        let n = cols.iter().map(|c| c.len()).min().unwrap_or(0);
        for i in 0..n {
            t.push_nums(&cols.iter().map(|c| c[i]).collect::<Vec<_>>());
        }
        t
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        Ok(w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?)
    }
}

/// A finished pipeline run.
#[derive(Debug)]
pub struct Report {
    pub command: &'static str,
    pub inputs: Value,
    pub checks: Vec<Check>,
    pub results: Value,
    pub runtimes: Map<String, Value>,
    pub table: Option<Table>,
    pub summary: Vec<String>,
}

impl Report {
    pub fn new(command: &'static str, inputs: Value) -> Self {
        Self { command, inputs, checks: Vec::new(), results: json!({}), runtimes: Map::new(), table: None, summary: Vec::new() }
    }

    pub fn result(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("report values serialize");
        self.results.as_object_mut().expect("results is an object").insert(key.to_string(), v);
    }

    pub fn counter(&mut self, key: &str, value: usize) {
        self.runtimes.insert(key.to_string(), json!(value));
    }

    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn verdict(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failing(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    /// The JSON document. Object keys come out sorted, so equal runs give
    /// equal bytes.
    pub fn to_json(&self, artifacts: &[String]) -> Value {
        let worst = self.checks.iter().map(|c| c.worst_margin).filter(|m| !m.is_nan()).fold(None, |a: Option<f64>, m| {
            Some(a.map_or(m, |a| a.min(m)))
        });
        json!({
            "tool": "curvlab",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "inputs": self.inputs,
            "checks": self.checks,
            "verdict": self.verdict(),
            "worst_margin": worst,
            "results": self.results,
            "runtimes": self.runtimes,
            "artifacts": artifacts,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quotes_and_crlf() {
        let mut t = Table::new(&["name", "value"]);
        t.push(vec!["a,b".into(), "say \"hi\"".into()]);
        t.push_nums(&[1.5, f64::NAN]);
        let s = String::from_utf8(t.to_csv().unwrap()).unwrap();
        assert_eq!(s, "name,value\r\n\"a,b\",\"say \"\"hi\"\"\"\r\n1.5,\r\n");
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = Table::new(&["a", "b"]);
        assert_eq!(t.to_csv().unwrap(), b"a,b\r\n");
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1e-300, 1.0 / 3.0, 6.02e23] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
