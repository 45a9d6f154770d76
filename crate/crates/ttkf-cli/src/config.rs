//! JSON config-file support: every command takes `--config file.json` whose
//! keys mirror the long flag names; explicit flags override file values.

use std::path::Path;

use serde::de::DeserializeOwned;

use crate::CliError;

pub(crate) fn load<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
}

/// Flag value wins over the config file.
pub(crate) fn pick<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}

pub(crate) fn require<T>(value: Option<T>, name: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("missing required option --{name}")))
}

/// Broadcast a per-output list: a single value applies to all `l` outputs.
pub(crate) fn broadcast(values: Vec<f64>, l: usize, name: &str) -> Result<Vec<f64>, CliError> {
    if values.len() == l {
        Ok(values)
    } else if values.len() == 1 {
        Ok(vec![values[0]; l])
    } else {
        Err(CliError::Usage(format!(
            "--{name} needs 1 or {l} values, got {}",
            values.len()
        )))
    }
}

pub(crate) fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Usage(format!("cannot serialize JSON: {e}")))?;
    std::fs::write(path, text + "\n")
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}
