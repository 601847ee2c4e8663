//! Library side of the `siqrb` command-line tool: config loading, output
//! formatting and the command implementations.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use siqrb_core::calibrate::{CalibrateError, SeriesError};
use siqrb_core::integrate::IntegrateError;
use siqrb_core::optctl::OptError;
use siqrb_core::scenario::ScenarioError;
use siqrb_core::ScenarioConfig;
use thiserror::Error;

pub mod commands;
pub mod output;

/// Bundled Yemen scenario, used when no `--config` is given.
pub const YEMEN_CONFIG: &str = include_str!("../data/yemen.json");

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("numerical blow-up: {0}")]
    BlowUp(String),
    #[error("{0}")]
    NotConverged(String),
    #[error("cannot write output: {0}")]
    Output(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::BlowUp(_) => 3,
            CliError::NotConverged(_) => 4,
            CliError::Output(_) => 1,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Input(format!("invalid scenario: {e}"))
    }
}

impl From<IntegrateError> for CliError {
    fn from(e: IntegrateError) -> Self {
        match e {
            IntegrateError::NonFinite { .. } => CliError::BlowUp(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<OptError> for CliError {
    fn from(e: OptError) -> Self {
        match e {
            OptError::Integrate(inner) => inner.into(),
            OptError::NonFiniteAdjoint { .. } => CliError::BlowUp(e.to_string()),
            OptError::SingularArc { .. } => CliError::NotConverged(e.to_string()),
            OptError::NoControlAuthority(_) | OptError::ScheduleLength { .. } => {
                CliError::Input(e.to_string())
            }
        }
    }
}

impl From<CalibrateError> for CliError {
    fn from(e: CalibrateError) -> Self {
        match e {
            CalibrateError::Integrate(inner) => inner.into(),
            CalibrateError::AllCandidatesFailed => CliError::BlowUp(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<SeriesError> for CliError {
    fn from(e: SeriesError) -> Self {
        CliError::Input(format!("bad case series: {e}"))
    }
}

/// Where the scenario comes from, plus `key=value` overrides applied on top.
#[derive(Debug, Clone, Default)]
pub struct ConfigSource {
    pub path: Option<PathBuf>,
    pub overrides: Vec<(String, f64)>,
}

impl ConfigSource {
    pub fn bundled() -> Self {
        Self::default()
    }

    pub fn file(path: impl Into<PathBuf>) -> Self {
        Self {
            path: Some(path.into()),
            overrides: Vec::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.overrides.push((key.to_string(), value));
        self
    }

    pub fn load(&self) -> Result<ScenarioConfig, CliError> {
        let text = match &self.path {
            Some(path) => read_input(path)?,
            None => YEMEN_CONFIG.to_string(),
        };
        parse_config(&text, &self.overrides)
    }
}

pub fn read_input(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

/// Parses a flat JSON scenario and applies numeric overrides. Unknown
/// override keys are rejected rather than silently added.
pub fn parse_config(text: &str, overrides: &[(String, f64)]) -> Result<ScenarioConfig, CliError> {
    let mut doc: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| CliError::Input(format!("config is not valid JSON: {e}")))?;
    let fields = doc
        .as_object_mut()
        .ok_or_else(|| CliError::Input("config must be a JSON object".into()))?;
    for (key, value) in overrides {
        let slot = fields
            .get_mut(key)
            .ok_or_else(|| CliError::Input(format!("unknown config key `{key}`")))?;
        *slot = serde_json::Value::from(*value);
    }
    let keys: Vec<String> = fields.keys().cloned().collect();
    let cfg: ScenarioConfig =
        serde_json::from_value(doc).map_err(|e| CliError::Input(format!("invalid config: {e}")))?;
    // flattened structs cannot deny unknown fields, so compare key sets
    let known = serde_json::to_value(&cfg).expect("config serializes");
    if let Some(extra) = keys.iter().find(|k| known.get(k.as_str()).is_none()) {
        return Err(CliError::Input(format!("unknown config key `{extra}`")));
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parses `key=value` with a numeric value.
pub fn parse_override(arg: &str) -> Result<(String, f64), String> {
    let (key, value) = arg.split_once('=').ok_or("expected key=value")?;
    let value: f64 = value
        .trim()
        .parse()
        .map_err(|_| format!("`{value}` is not a number"))?;
    Ok((key.trim().to_string(), value))
}
