//! Run reports and output files.
//!
//! `report.json` has the fixed top-level keys below; `params`, `truth` and
//! `metrics` are experiment-specific objects. Object keys are written in
//! sorted order and wall time is kept in `timing.json`, so identical runs
//! produce byte-identical reports.
//!
//! ```text
//! {
//!   "schema": 1,
//!   "experiment": "<kind>",
//!   "seed": <u64>,
//!   "rng": { "generator", "crate", "seeding" },
//!   "config": { <overrides as given> },
//!   "params": { <resolved settings> },
//!   "truth": { <ground truth> },
//!   "metrics": { <results> },
//!   "files": [ "<csv file>", ... ],
//!   "converged": <bool>,
//!   "warnings": [ "<text>", ... ]
//! }
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::Result;
use crate::rng;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngInfo {
    pub generator: String,
    #[serde(rename = "crate")]
    pub krate: String,
    pub seeding: String,
}

impl RngInfo {
    pub fn pinned() -> Self {
        Self {
            generator: rng::GENERATOR.into(),
            krate: rng::GENERATOR_CRATE.into(),
            seeding: rng::SEEDING.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub schema: u32,
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub rng: RngInfo,
    pub config: ExperimentConfig,
    pub params: Value,
    pub truth: Value,
    pub metrics: Value,
    pub files: Vec<String>,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Parses a report, rejecting unknown keys and other schema versions.
    pub fn from_json(text: &str) -> Result<Self> {
        let report: Self = serde_json::from_str(text)?;
        if report.schema != SCHEMA_VERSION {
            return Err(crate::error::config_error(format!("unsupported report schema {}", report.schema)));
        }
        Ok(report)
    }
}

/// A report plus the files it references.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub files: Vec<(String, String)>,
    pub wall_seconds: f64,
}

impl RunOutput {
    /// Writes `report.json`, `timing.json` and every CSV into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (name, contents) in &self.files {
            fs::write(dir.join(name), contents)?;
        }
        fs::write(dir.join("report.json"), self.report.to_json()?)?;
        let timing = serde_json::json!({ "wall_seconds": self.wall_seconds });
        fs::write(dir.join("timing.json"), serde_json::to_string_pretty(&timing)? + "\n")?;
        Ok(())
    }

    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }
}

/// Builds CSV text from a header and rows of numbers.
pub fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| format!("{v:e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is ascii"))
}
