//! JSON run configuration. Command-line flags override every field.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use attribution_space::detector::TrainConfig;
use attribution_space::synth::SynthSpec;
use attribution_space::{Error, Result};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub log: Option<PathBuf>,
    pub fraction: Option<f64>,
    pub fractions: Option<Vec<f64>>,
    pub seeds: Option<Vec<u64>>,
    pub holdout: Option<f64>,
    pub split_seed: Option<u64>,
    pub train: TrainConfig,
    pub synth: SynthSpec,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|e| with_path(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Argument(format!("config {}: {e}", path.display())))
    }
}

pub fn with_path(path: &Path, e: io::Error) -> Error {
    Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

/// Picks the flag, then the config value, and fails if neither is set.
pub fn required(flag: Option<PathBuf>, config: Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or(config)
        .ok_or_else(|| Error::Argument(format!("--{name} is required (flag or config field)")))
}

pub fn check_input(path: &Path) -> Result<()> {
    fs::metadata(path).map(|_| ()).map_err(|e| with_path(path, e))
}

/// The directory an output file will be written to must already exist.
pub fn check_output(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => check_input(dir),
        _ => Ok(()),
    }
}

/// `base` with `suffix` appended to its file name.
pub fn sibling(base: &Path, suffix: &str) -> PathBuf {
    let mut name = base.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    base.with_file_name(name)
}
