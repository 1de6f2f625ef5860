//! On-disk layout of a run: one directory per stage, reports at the root,
//! and a manifest in every directory that holds outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use survey_impute::io::{self, fmt_f64};
use survey_impute::Scenario;

use crate::config::{ExperimentConfig, StageSeeds};
use crate::error::{HarnessError, Result};
use crate::pipeline::{ComparisonTable, Estimates};

pub const FRAME_DIR: &str = "frame";
pub const SAMPLE_DIR: &str = "sample";
pub const CLAIMS_DIR: &str = "claims";
pub const STUDY_DIR: &str = "study";
pub const IMPUTATIONS_DIR: &str = "imputations";
pub const IMPUTATION_ERROR_TXT: &str = "error.txt";
pub const ESTIMATES_CSV: &str = "estimates.csv";
pub const ESTIMATES_JSON: &str = "estimates.json";
pub const COMPARISON_CSV: &str = "comparison.csv";
pub const COMPARISON_JSON: &str = "comparison.json";
pub const MANIFEST_JSON: &str = "manifest.json";

pub fn imputation_dir(out: &Path, scenario: Scenario) -> PathBuf {
    out.join(IMPUTATIONS_DIR).join(scenario.as_str())
}

pub fn efficiency_file(scenario: Scenario, outcome: &str) -> String {
    format!("efficiency_{}_{outcome}.csv", scenario.as_str())
}

pub fn correlation_file(scenario: Scenario, outcome: &str) -> String {
    format!("correlation_{}_{outcome}.csv", scenario.as_str())
}

/// Everything needed to re-run the outputs of one directory exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_digest: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<StageSeeds>,
    /// File name to hex SHA-256 of its bytes.
    pub files: BTreeMap<String, String>,
    pub runtime_seconds: f64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(HarnessError::io(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Writes `manifest.json` covering the regular files directly in `dir`.
pub fn write_manifest(
    dir: &Path,
    command: &str,
    config: &ExperimentConfig,
    seeds: Vec<StageSeeds>,
    runtime_seconds: f64,
) -> Result<Manifest> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(HarnessError::io(dir))? {
        let entry = entry.map_err(HarnessError::io(dir))?;
        let path = entry.path();
        let name = entry.file_name().to_string_lossy().into_owned();
        if path.is_file() && name != MANIFEST_JSON {
            files.insert(name, sha256_file(&path)?);
        }
    }
    let manifest = Manifest {
        command: command.to_string(),
        config_digest: config.digest(),
        config: config.clone(),
        seeds,
        files,
        runtime_seconds,
    };
    io::write_json(&dir.join(MANIFEST_JSON), &manifest).map_err(HarnessError::stage("write"))?;
    Ok(manifest)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
    }
    csv::Writer::from_path(path).map_err(|e| HarnessError::Stage {
        stage: "write",
        source: e.into(),
    })
}

fn csv_err(e: csv::Error) -> HarnessError {
    HarnessError::Stage {
        stage: "write",
        source: e.into(),
    }
}

/// Long-format estimates: one row per cell, failed cells included.
pub fn write_estimates_csv(path: &Path, estimates: &Estimates) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header: Vec<&str> = io::ESTIMATE_HEADER.to_vec();
    header.push("truth");
    w.write_record(&header).map_err(csv_err)?;
    for c in &estimates.cells {
        let result = match (&c.report, &c.error) {
            (Some(r), _) => Ok(r),
            (None, e) => Err(e.as_deref().unwrap_or("unknown error")),
        };
        let mut row = io::estimate_record(
            c.method.as_str(),
            c.scenario.map(|s| s.as_str()),
            &c.outcome,
            c.level.as_str(),
            result,
        );
        row.push(fmt_f64(c.truth));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(HarnessError::io(path))
}

/// Wide table: `Mean` and `S.E.` per method column. A failed cell carries
/// `FAILED: <error>` in its `Mean` field.
pub fn write_comparison_csv(path: &Path, table: &ComparisonTable) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["outcome".to_string(), "level".into(), "Truth".into()];
    for c in &table.columns {
        header.push(format!("{c} Mean"));
        header.push(format!("{c} S.E."));
    }
    w.write_record(&header).map_err(csv_err)?;
    for r in &table.rows {
        let mut row = vec![r.outcome.clone(), r.level.as_str().to_string(), fmt_f64(r.truth)];
        for c in &r.cells {
            match (c.mean, &c.error) {
                (Some(m), _) => {
                    row.push(fmt_f64(m));
                    row.push(c.se.map(fmt_f64).unwrap_or_default());
                }
                (None, e) => {
                    row.push(format!("FAILED: {}", e.as_deref().unwrap_or("unknown error")));
                    row.push(String::new());
                }
            }
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(HarnessError::io(path))
}

/// Estimates, comparison table, and per-scenario diagnostics under `dir`.
pub fn write_reports(dir: &Path, estimates: &Estimates, table: &ComparisonTable) -> Result<()> {
    let write = HarnessError::stage("write");
    write_estimates_csv(&dir.join(ESTIMATES_CSV), estimates)?;
    io::write_json(&dir.join(ESTIMATES_JSON), estimates).map_err(write)?;
    write_comparison_csv(&dir.join(COMPARISON_CSV), table)?;
    io::write_json(&dir.join(COMPARISON_JSON), table).map_err(HarnessError::stage("write"))?;
    for e in &estimates.efficiency {
        if let Some(d) = &e.diagnostic {
            io::write_efficiency_table(&dir.join(efficiency_file(e.scenario, &e.outcome)), d)
                .map_err(HarnessError::stage("write"))?;
        }
    }
    for c in &estimates.correlations {
        if let Some(rows) = &c.rows {
            io::write_correlation_table(&dir.join(correlation_file(c.scenario, &c.outcome)), rows)
                .map_err(HarnessError::stage("write"))?;
        }
    }
    Ok(())
}
