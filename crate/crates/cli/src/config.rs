//! Flat `key=value` configuration files and flag overrides.

use std::path::{Path, PathBuf};

use fedmix_core::trainer::{ConfigError, TrainConfig};

/// Environment variable naming the output directory when neither the config
/// file nor the flags set `out_dir`.
pub const OUT_DIR_ENV: &str = "FEDMIX_OUT";

/// Parses config text: one `key=value` per line, `#` starts a comment, blank
/// lines are ignored.
pub fn parse_entries(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut entries = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError {
                key: line.to_string(),
                message: format!("line {}: expected key=value", lineno + 1),
            });
        };
        entries.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(entries)
}

/// Defaults, then the file entries, then the flag overrides, then the
/// `FEDMIX_OUT` fallback for an unset output directory. The result is
/// validated.
pub fn resolve_config(
    file_text: Option<&str>,
    overrides: &[(String, String)],
    out_dir_fallback: Option<PathBuf>,
) -> Result<TrainConfig, ConfigError> {
    let mut config = TrainConfig::default();
    let file_entries = match file_text {
        Some(t) => parse_entries(t)?,
        None => Vec::new(),
    };
    let mut out_dir_set = false;
    for (k, v) in file_entries.iter().chain(overrides) {
        config.set(k, v)?;
        out_dir_set |= k == "out_dir";
    }
    if !out_dir_set {
        if let Some(dir) = out_dir_fallback {
            config.out_dir = dir;
        }
    }
    config.validate()?;
    Ok(config)
}

/// [`resolve_config`] reading the file at `path` and the `FEDMIX_OUT`
/// environment variable.
pub fn parse_config(
    path: Option<&Path>,
    overrides: &[(String, String)],
) -> Result<TrainConfig, ConfigError> {
    let text = match path {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| ConfigError {
            key: "config".to_string(),
            message: format!("{}: {e}", p.display()),
        })?),
        None => None,
    };
    let fallback = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from);
    resolve_config(text.as_deref(), overrides, fallback)
}
