//! The three subcommands, independent of argument parsing and printing.

use crate::config::{self, LoadedConfig};
use crate::output::{self, RunManifest, SummaryFile};
use crate::{CliError, SCHEMA_VERSION, TOOL_VERSION};
use bendlift::control::KD_LYAPUNOV_BOUND;
use bendlift::sim::{run_batch_with, Method, SimConfig};
use bendlift::validation::{validation_suite, PropertyResult};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

#[derive(Debug, Clone, Default)]
pub struct RunRequest {
    /// Config file path or preset name.
    pub config: String,
    pub overrides: Vec<String>,
    /// Exact output directory; defaults to `out_root/<run name>`.
    pub out_dir: Option<PathBuf>,
    pub out_root: PathBuf,
    /// Print one line per finished trial to stderr.
    pub progress: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub summary: SummaryFile,
}

impl RunOutcome {
    /// `method trial N: reason` for every trial that failed its task.
    pub fn failures(&self) -> Vec<String> {
        self.summary
            .report
            .methods
            .iter()
            .flat_map(|m| m.trials.iter())
            .filter(|t| !t.success)
            .map(|t| {
                format!(
                    "{} trial {}: {}",
                    t.method.label(),
                    t.trial,
                    t.failure.as_deref().unwrap_or("unknown")
                )
            })
            .collect()
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Loads and validates the config, runs the batch and writes every report.
pub fn run(req: &RunRequest) -> Result<RunOutcome, CliError> {
    let LoadedConfig { name, source, config } = config::load(&req.config, &req.overrides)?;
    let dir = req.out_dir.clone().unwrap_or_else(|| req.out_root.join(&name));
    run_loaded(&name, &source, &config, &dir, req.progress)
}

/// Runs an already validated config into `dir`.
pub fn run_loaded(
    name: &str,
    source: &str,
    config: &SimConfig,
    dir: &Path,
    progress: bool,
) -> Result<RunOutcome, CliError> {
    create_dir(dir)?;
    output::write_json(&dir.join(output::MANIFEST_FILE), &RunManifest::new(source, dir, config))?;
    output::write_atomic(&dir.join(output::CONFIG_SNAPSHOT), config::to_toml(config)?.as_bytes())?;

    let scenario = config.scenario.label();
    let write_error: Mutex<Option<CliError>> = Mutex::new(None);
    let report = run_batch_with(config, |trial| {
        if progress {
            let s = &trial.summary;
            eprintln!(
                "{:<13} trial {:>2}: mean {:.4} m, std {:.4} m{}",
                s.method.label(),
                s.trial,
                s.mean_error,
                s.std_error,
                s.failure.as_deref().map(|f| format!(" [{f}]")).unwrap_or_default()
            );
        }
        if let Err(e) = output::write_trial(dir, scenario, trial) {
            write_error.lock().expect("writer lock").get_or_insert(e);
        }
    })?;
    if let Some(e) = write_error.into_inner().expect("writer lock") {
        return Err(e);
    }

    let summary = SummaryFile {
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION.to_string(),
        run: name.to_string(),
        report,
    };
    output::write_json(&dir.join(output::SUMMARY_JSON), &summary)?;
    output::write_atomic(&dir.join(output::SUMMARY_CSV), &output::summary_csv(&summary.report))?;
    Ok(RunOutcome {
        dir: dir.to_path_buf(),
        summary,
    })
}

/// Per-method, per-trial table of mean and STD error.
pub fn format_summary(summary: &SummaryFile) -> String {
    let mut out = format!(
        "{} ({}, seed {})\n{:<14}{:>6}{:>12}{:>12}  status\n",
        summary.run, summary.report.scenario, summary.report.seed, "method", "trial", "mean [m]", "std [m]"
    );
    for m in &summary.report.methods {
        for t in &m.trials {
            out.push_str(&format!(
                "{:<14}{:>6}{:>12.5}{:>12.5}  {}\n",
                m.method.label(),
                t.trial,
                t.mean_error,
                t.std_error,
                if t.success { "ok" } else { "FAILED" }
            ));
        }
        if let Some(trend) = m.trend {
            out.push_str(&format!("{:<14}  trend (Spearman) {trend:+.3}\n", m.method.label()));
        }
    }
    out
}

/// One line of the long-format comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    /// Report directory as given on the command line.
    pub run: String,
    pub scenario: String,
    pub seed: u64,
    pub method: Method,
    pub trial: usize,
    pub mean_error: f64,
    pub std_error: f64,
    pub success: bool,
    /// `run/method` whose trial mean is the denominator of `ratio`.
    pub reference: String,
    pub ratio: f64,
}

/// Loads `summary.json` from a report directory, checking the schema
/// version before interpreting anything else.
pub fn load_summary(dir: &Path) -> Result<SummaryFile, CliError> {
    let path = dir.join(output::SUMMARY_JSON);
    let raw: serde_json::Value = output::read_json(&path)?;
    let found = raw.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != SCHEMA_VERSION {
        return Err(CliError::SchemaMismatch {
            path,
            found,
            expected: SCHEMA_VERSION,
        });
    }
    serde_json::from_value(raw).map_err(|e| CliError::io(&path, e.into()))
}

/// Cross-run table. Each trial mean is divided by the reference trial mean
/// of the same index (the reference's last trial when it has fewer): the
/// `baseline` method from the first run that has it, or else the same
/// method in the first run.
pub fn compare(dirs: &[PathBuf], baseline: Option<Method>) -> Result<Vec<ComparisonRow>, CliError> {
    if dirs.len() < 2 {
        return Err(CliError::Config("compare needs at least two report directories".into()));
    }
    let runs: Vec<(String, SummaryFile)> = dirs
        .iter()
        .map(|d| Ok((d.display().to_string(), load_summary(d)?)))
        .collect::<Result<_, CliError>>()?;

    let find = |method: Method| -> Option<(&str, &[f64])> {
        let candidates: Box<dyn Iterator<Item = &(String, SummaryFile)>> = match baseline {
            Some(_) => Box::new(runs.iter()),
            None => Box::new(runs.iter().take(1)),
        };
        for (name, s) in candidates {
            if let Some(m) = s.report.method(method) {
                return Some((name.as_str(), m.trial_means.as_slice()));
            }
        }
        None
    };

    let mut rows = Vec::new();
    for (name, s) in &runs {
        for m in &s.report.methods {
            let reference = find(baseline.unwrap_or(m.method));
            for t in &m.trials {
                let (reference, ratio) = match reference {
                    Some((ref_run, means)) if !means.is_empty() => {
                        let denom = means[(t.trial - 1).min(means.len() - 1)];
                        let label = format!("{ref_run}/{}", baseline.unwrap_or(m.method).label());
                        (label, t.mean_error / denom)
                    }
                    _ => (String::new(), f64::NAN),
                };
                rows.push(ComparisonRow {
                    run: name.clone(),
                    scenario: s.report.scenario.clone(),
                    seed: s.report.seed,
                    method: m.method,
                    trial: t.trial,
                    mean_error: t.mean_error,
                    std_error: t.std_error,
                    success: t.success,
                    reference,
                    ratio,
                });
            }
        }
    }
    Ok(rows)
}

pub fn format_comparison(rows: &[ComparisonRow]) -> String {
    let width = rows.iter().map(|r| r.run.len()).max().unwrap_or(3).max(3) + 2;
    let mut out = format!(
        "{:<width$}{:<14}{:>6}{:>12}{:>12}{:>9}\n",
        "run", "method", "trial", "mean [m]", "std [m]", "ratio"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<width$}{:<14}{:>6}{:>12.5}{:>12.5}{:>9.3}\n",
            r.run,
            r.method.label(),
            r.trial,
            r.mean_error,
            r.std_error,
            r.ratio
        ));
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct ValidateRequest {
    /// Config file path or preset; library defaults when absent.
    pub config: Option<String>,
    pub overrides: Vec<String>,
    pub k_d: Option<f64>,
    pub lambda: Option<f64>,
    pub order: Option<usize>,
}

/// Runs the validation-mode property suite.
pub fn validate(req: &ValidateRequest) -> Result<Vec<PropertyResult>, CliError> {
    let text = match &req.config {
        Some(spec) => config::read_source(spec)?.2,
        None => String::new(),
    };
    let mut c = config::parse_config(&text, &req.overrides)?;
    if let Some(k_d) = req.k_d {
        c.gains.adaptive.k_d = k_d;
    }
    if let Some(lambda) = req.lambda {
        c.estimator.lambda = lambda;
    }
    if let Some(order) = req.order {
        c.estimator.order = order;
    }
    // The derivative-gain bound is what the Lyapunov property probes, so it
    // is not enforced here; everything else is.
    let mut checked = c.clone();
    if !(checked.gains.adaptive.k_d > KD_LYAPUNOV_BOUND) && checked.gains.adaptive.k_d > 0.0 {
        checked.gains.adaptive.k_d = 2.0 * KD_LYAPUNOV_BOUND;
    }
    checked.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(validation_suite(&c)?)
}
