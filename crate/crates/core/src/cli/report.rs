//! JSON run report (`thermal-kms/report/v1`).
//!
//! Maps are ordered, so two runs on the same inputs serialize to the same
//! bytes except for `timestamp`.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::{SystemTime, UNIX_EPOCH};

use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

use super::config::{Config, Tolerances};

pub const REPORT_SCHEMA: &str = "thermal-kms/report/v1";

#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub version: &'static str,
    pub config_path: String,
    /// Command-line values that replaced config entries.
    pub overrides: BTreeMap<String, Value>,
    /// The effective config, overrides applied.
    pub config: Config,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: Value,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub command: String,
    /// Seconds since the Unix epoch; the only field that varies between runs.
    pub timestamp: u64,
    pub provenance: Provenance,
    pub tolerances: Tolerances,
    pub results: BTreeMap<String, Value>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl Report {
    pub fn new(command: &str, provenance: Provenance) -> Self {
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        Self {
            schema: REPORT_SCHEMA,
            command: command.to_string(),
            timestamp,
            tolerances: provenance.config.run.tolerances,
            provenance,
            results: BTreeMap::new(),
            checks: Vec::new(),
            passed: true,
        }
    }

    pub fn result(&mut self, key: &str, value: Value) {
        self.results.insert(key.to_string(), value);
    }

    pub fn check(&mut self, name: impl Into<String>, passed: bool, detail: Value) {
        self.passed &= passed;
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail,
        });
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        serde_json::to_writer_pretty(&mut out, self)?;
        writeln!(out)
    }
}

pub fn complex(z: Complex64) -> Value {
    json!({ "re": z.re, "im": z.im })
}
