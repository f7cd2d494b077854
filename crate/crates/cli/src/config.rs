//! TOML configuration: shipped presets, `key.path=value` overrides and
//! deserialization with the path of the offending field in the error.

use crate::CliError;
use bendlift::sim::{Method, SimConfig};
use std::path::Path;

/// Presets addressable by name on the command line.
pub const PRESETS: [(&str, &str); 3] = [
    ("exp1", include_str!("../../../configs/exp1.toml")),
    ("exp2", include_str!("../../../configs/exp2.toml")),
    ("exp3", include_str!("../../../configs/exp3.toml")),
];

#[derive(Debug, Clone)]
pub struct LoadedConfig {
    /// Run name: the preset name or the file stem.
    pub name: String,
    /// Where the config came from (`preset:exp1` or a file path).
    pub source: String,
    pub config: SimConfig,
}

/// Reads `spec` as a file path, falling back to a preset name.
pub fn read_source(spec: &str) -> Result<(String, String, String), CliError> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into());
        return Ok((name, spec.to_string(), text));
    }
    match PRESETS.iter().find(|(n, _)| *n == spec) {
        Some((name, text)) => Ok((name.to_string(), format!("preset:{name}"), text.to_string())),
        None => Err(CliError::Config(format!(
            "`{spec}` is neither a file nor a preset (known presets: {})",
            PRESETS.map(|(n, _)| n).join(", ")
        ))),
    }
}

/// Sets `key.path = value` in `table`. The value is read as a TOML value and
/// taken as a bare string if that fails, so `--set scenario.kind=window-pass`
/// works without quotes.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not of the form key=value")))?;
    let key = key.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("override key `{key}` is malformed")));
    }
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override `{key}`: `{part}` is not a table")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Parses config text, applies overrides and deserializes. Does not run the
/// semantic checks of [`SimConfig::validate`].
pub fn parse_config(text: &str, overrides: &[String]) -> Result<SimConfig, CliError> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    serde_path_to_error::deserialize::<_, SimConfig>(toml::Value::Table(table)).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        CliError::Config(format!("at `{path}`: {}", inner.message().trim()))
    })
}

/// Loads, overrides and fully validates a run configuration.
pub fn load(spec: &str, overrides: &[String]) -> Result<LoadedConfig, CliError> {
    let (name, source, text) = read_source(spec)?;
    let config = parse_config(&text, overrides)?;
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(LoadedConfig { name, source, config })
}

/// Overrides for the dedicated run flags.
pub fn flag_overrides(methods: &[Method], trials: Option<usize>, seed: Option<u64>) -> Vec<String> {
    let mut out = Vec::new();
    if !methods.is_empty() {
        let list: Vec<String> = methods.iter().map(|m| format!("\"{}\"", m.label())).collect();
        out.push(format!("methods=[{}]", list.join(", ")));
    }
    if let Some(t) = trials {
        out.push(format!("trials={t}"));
    }
    if let Some(s) = seed {
        out.push(format!("seed={s}"));
    }
    out
}

/// Resolved config as TOML, suitable for re-running.
pub fn to_toml(config: &SimConfig) -> Result<String, CliError> {
    toml::to_string(config).map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))
}
