//! CSV tables and JSON run manifests.

use std::io::Write;

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;

/// Shortest round-trip decimal rendering; identical inputs always give identical bytes.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x}")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.header)?;
        for r in &self.rows {
            out.write_record(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

/// Anything that renders as one CSV table plus a JSON summary with a pass/fail verdict.
pub trait Report {
    fn table(&self) -> Table;
    fn passed(&self) -> bool;
    fn summary(&self) -> Value;
}

/// Run manifest written next to every CSV.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: Value,
    pub config_hash: String,
    pub csv: String,
    pub passed: bool,
    pub summary: Value,
    /// Numeric thresholds applied by the run; all are implementation policy.
    pub policy: Value,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_header_and_roundtrip_floats() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![fmt_f64(0.1 + 0.2), fmt_f64(f64::NAN)]);
        let s = t.to_csv_string();
        assert_eq!(s, "a,b\n0.30000000000000004,nan\n");
        let back: f64 = s.lines().nth(1).unwrap().split(',').next().unwrap().parse().unwrap();
        assert_eq!(back, 0.1 + 0.2);
    }
}
