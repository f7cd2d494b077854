//! Report files: manifest, summaries and per-step CSV logs. Every file is
//! written to a temporary sibling and renamed into place.

use crate::{CliError, SCHEMA_VERSION, TOOL_VERSION};
use bendlift::sim::{BatchReport, SimConfig, StepRecord, TrialReport};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_JSON: &str = "summary.json";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const CONFIG_SNAPSHOT: &str = "config.toml";

/// Column layout of `summary.csv`.
pub const SUMMARY_COLUMNS: [&str; 10] = [
    "scenario",
    "method",
    "trial",
    "steps",
    "mean_error",
    "std_error",
    "success",
    "saturation_steps",
    "max_command_jump",
    "failure",
];

/// Column layout of the long-format file written by `compare`.
pub const COMPARISON_COLUMNS: [&str; 10] = [
    "run",
    "scenario",
    "seed",
    "method",
    "trial",
    "mean_error",
    "std_error",
    "success",
    "reference",
    "ratio",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    /// File path or `preset:<name>`.
    pub config_path: String,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Fully resolved configuration; reproduces the run exactly.
    pub config: SimConfig,
}

impl RunManifest {
    pub fn new(config_path: &str, output_dir: &Path, config: &SimConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool_version: TOOL_VERSION.to_string(),
            config_path: config_path.to_string(),
            output_dir: output_dir.to_path_buf(),
            seed: config.seed,
            config: config.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub schema_version: u32,
    pub tool_version: String,
    /// Run name (preset or config file stem).
    pub run: String,
    pub report: BatchReport,
}

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_vec_pretty(value).map_err(|e| CliError::io(path, e.into()))?;
    write_atomic(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_slice(&text).map_err(|e| CliError::io(path, e.into()))
}

/// `{scenario}_{method}_{trial}` without extension.
pub fn trial_stem(scenario: &str, report: &TrialReport) -> String {
    format!("{scenario}_{}_{}", report.summary.method.label(), report.summary.trial)
}

/// Column layout of the per-step CSV logs.
pub fn step_columns() -> Vec<String> {
    let mut cols: Vec<String> = ["t", "distance", "error", "saturated"].map(String::from).to_vec();
    for i in 1..=2 {
        for q in ["p", "p_d", "e", "u", "f_o", "f_hat", "f_true", "eps"] {
            for axis in ["x", "y", "z"] {
                cols.push(format!("{q}{i}_{axis}"));
            }
        }
        cols.push(format!("v_p{i}"));
        cols.push(format!("v_w{i}"));
    }
    cols
}

fn step_row(r: &StepRecord) -> Vec<String> {
    let mut row = vec![
        r.t.to_string(),
        r.distance.to_string(),
        r.error.to_string(),
        u8::from(r.saturated).to_string(),
    ];
    for v in &r.vehicles {
        for q in [v.p, v.p_d, v.e, v.u, v.f_o, v.f_hat, v.f_true, v.eps] {
            row.extend(q.iter().map(f64::to_string));
        }
        row.push(v.v_p.to_string());
        row.push(v.v_w.to_string());
    }
    row
}

fn csv_bytes<I>(header: &[String], rows: I) -> Vec<u8>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    // Writing to a Vec cannot fail.
    w.write_record(header).expect("in-memory csv");
    for row in rows {
        w.write_record(&row).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

pub fn step_csv(report: &TrialReport) -> Vec<u8> {
    csv_bytes(&step_columns(), report.records.iter().map(step_row))
}

/// Trial report without the step records (those go to the CSV).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialFile<'a> {
    pub schema_version: u32,
    pub summary: &'a bendlift::sim::TrialSummary,
    pub validation: bool,
    pub snapshots: &'a [bendlift::sim::EstimatorSnapshot],
}

/// Writes `{stem}.csv` and `{stem}.json` for one trial.
pub fn write_trial(dir: &Path, scenario: &str, report: &TrialReport) -> Result<(), CliError> {
    let stem = trial_stem(scenario, report);
    write_atomic(&dir.join(format!("{stem}.csv")), &step_csv(report))?;
    write_json(
        &dir.join(format!("{stem}.json")),
        &TrialFile {
            schema_version: SCHEMA_VERSION,
            summary: &report.summary,
            validation: report.validation,
            snapshots: &report.snapshots,
        },
    )
}

pub fn summary_csv(report: &BatchReport) -> Vec<u8> {
    let header: Vec<String> = SUMMARY_COLUMNS.map(String::from).to_vec();
    let rows = report.methods.iter().flat_map(|m| {
        m.trials.iter().map(|t| {
            vec![
                report.scenario.clone(),
                t.method.label().to_string(),
                t.trial.to_string(),
                t.steps.to_string(),
                t.mean_error.to_string(),
                t.std_error.to_string(),
                t.success.to_string(),
                t.saturation_steps.to_string(),
                t.max_command_jump.to_string(),
                t.failure.clone().unwrap_or_default(),
            ]
        })
    });
    csv_bytes(&header, rows)
}

pub fn comparison_csv(rows: &[crate::commands::ComparisonRow]) -> Vec<u8> {
    let header: Vec<String> = COMPARISON_COLUMNS.map(String::from).to_vec();
    csv_bytes(
        &header,
        rows.iter().map(|r| {
            vec![
                r.run.clone(),
                r.scenario.clone(),
                r.seed.to_string(),
                r.method.label().to_string(),
                r.trial.to_string(),
                r.mean_error.to_string(),
                r.std_error.to_string(),
                r.success.to_string(),
                r.reference.clone(),
                r.ratio.to_string(),
            ]
        }),
    )
}
