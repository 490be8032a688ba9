//! JSON reports and CSV tables.

use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

use ocscape_core::Error;

use crate::config::{Format, RunConfig};

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    /// `coord1..coordK,objective`.
    pub fn landscape(k: usize) -> Self {
        let mut header: Vec<String> = (1..=k).map(|i| format!("coord{i}")).collect();
        header.push("objective".into());
        Self { header, rows: Vec::new() }
    }
}

/// What a command produced before it is wrapped in a report.
#[derive(Debug, Default)]
pub struct Outcome {
    pub result: Value,
    pub verdicts: Vec<Verdict>,
    pub csv: Option<CsvTable>,
    /// Failing verdicts make the run fail (exit 3).
    pub verdicts_gate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub tol_stat: f64,
    pub dedup: f64,
    pub eigen_floor: f64,
    pub probe_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorInfo {
    pub code: &'static str,
    pub message: String,
}

impl ErrorInfo {
    pub fn from_error(e: &Error) -> Self {
        let code = match e {
            Error::Dimension { .. } => "dimension",
            Error::NonFinite { .. } => "non_finite",
            Error::Invalid(_) => "invalid",
            Error::Infeasible { .. } => "infeasible",
            Error::NodeBudget { .. } => "node_budget",
            Error::OutsideGrid { .. } => "outside_grid",
            Error::MissingEngine => "missing_engine",
            Error::IllConditioned { .. } => "ill_conditioned",
            Error::Parse { .. } => "parse",
            Error::Unknown(_) => "unknown",
            Error::GradientCheck { .. } => "gradient_check",
            Error::Numerical(_) => "numerical",
        };
        Self { code, message: e.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub status: &'static str,
    pub exit_code: i32,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub config: RunConfig,
    pub verdicts: Vec<Verdict>,
    pub result: Value,
    pub error: Option<ErrorInfo>,
}

/// Run metadata that differs between identical runs; written next to the report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMeta {
    pub command: String,
    pub timestamp_unix: u64,
    pub elapsed_seconds: f64,
    pub version: &'static str,
}

impl Report {
    pub fn build(command: &str, config: &RunConfig, outcome: std::result::Result<&Outcome, &Error>) -> Self {
        let tolerances = Tolerances {
            tol_stat: config.solver.tol_stat,
            dedup: config.census.dedup_tol,
            eigen_floor: ocscape_core::landscape::ClassifyOptions::default().eigen_floor,
            probe_radius: ocscape_core::landscape::ClassifyOptions::default().radius,
        };
        let (status, exit_code, verdicts, result, error) = match outcome {
            Ok(o) => {
                let failed = o.verdicts_gate && o.verdicts.iter().any(|v| !v.passed);
                if failed {
                    let err = ErrorInfo { code: "expected_mismatch", message: "one or more verdicts failed".into() };
                    ("failed", EXIT_NUMERICAL, o.verdicts.clone(), o.result.clone(), Some(err))
                } else {
                    ("ok", EXIT_OK, o.verdicts.clone(), o.result.clone(), None)
                }
            }
            Err(e) if e.is_validation() => ("validation_error", EXIT_VALIDATION, Vec::new(), Value::Null, Some(ErrorInfo::from_error(e))),
            Err(e) => ("numerical_error", EXIT_NUMERICAL, Vec::new(), Value::Null, Some(ErrorInfo::from_error(e))),
        };
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.into(),
            status,
            exit_code,
            seed: config.seed,
            tolerances,
            config: config.clone(),
            verdicts,
            result,
            error,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Shortest round-trip text, in exponent form outside `[1e-4, 1e15)`.
fn csv_number(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

/// Writes the report, the optional CSV table and the metadata file; returns the written paths.
pub fn write_outputs(
    dir: &Path,
    stem: &str,
    format: Format,
    report: &Report,
    csv: Option<&CsvTable>,
    elapsed: Duration,
) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let csv = csv.filter(|_| format.csv());
    if format.json() || csv.is_none() {
        let path = dir.join(format!("{stem}.json"));
        std::fs::write(&path, report.to_json())?;
        written.push(path);
    }
    if let Some(table) = csv {
        let path = dir.join(format!("{stem}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(&table.header)?;
        for row in &table.rows {
            w.write_record(row.iter().map(|v| csv_number(*v)))?;
        }
        w.flush()?;
        written.push(path);
    }
    let meta = RunMeta {
        command: report.command.clone(),
        timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        elapsed_seconds: elapsed.as_secs_f64(),
        version: env!("CARGO_PKG_VERSION"),
    };
    let path = dir.join(format!("{stem}.meta.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&meta).expect("meta serializes") + "\n")?;
    written.push(path);
    Ok(written)
}
