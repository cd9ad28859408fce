//! Experiment configuration files.
//!
//! A config is TOML with scenario keys at the top level (any missing key
//! takes its baseline value) and an optional `[sweep]` section:
//!
//! ```toml
//! R = 20
//! rho = 0.0
//!
//! [sweep]
//! parameter = "sigma_eta"
//! values = [0.0, 0.5, 2.0]   # optional; defaults to the bundled grid
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::scenario::{Scenario, ScenarioParam};

/// One-at-a-time variation of a single scenario parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub param: ScenarioParam,
    pub values: Vec<f64>,
}

impl Sweep {
    /// The bundled grid for `param`.
    pub fn preset(param: ScenarioParam) -> Result<Self, ConfigError> {
        let values = param.preset_grid().ok_or_else(|| ConfigError::NoPresetGrid(param.key().to_string()))?;
        Ok(Sweep { param, values })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub sweep: Option<Sweep>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    parameter: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values: Option<Vec<f64>>,
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut table: toml::Table =
        text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.message().to_string()))?;
    let sweep = match table.remove("sweep") {
        None => None,
        Some(value) => {
            let section: SweepSection = value
                .try_into()
                .map_err(|e: toml::de::Error| ConfigError::Parse(format!("[sweep]: {}", e.message())))?;
            let param: ScenarioParam = section.parameter.parse()?;
            let sweep = match section.values {
                Some(values) if values.is_empty() => {
                    return Err(ConfigError::Parse("[sweep] values must not be empty".into()));
                }
                Some(values) => Sweep { param, values },
                None => Sweep::preset(param)?,
            };
            Some(sweep)
        }
    };
    let scenario: Scenario = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Parse(e.message().to_string()))?;
    scenario.validate()?;
    if let Some(sweep) = &sweep {
        for &v in &sweep.values {
            scenario.with(sweep.param, v)?.validate()?;
        }
    }
    Ok(ExperimentConfig { scenario, sweep })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
    parse_config(&text)
}

/// Canonical TOML text of a config; parses back to the same config.
pub fn to_toml(config: &ExperimentConfig) -> String {
    let mut text = toml::to_string(&config.scenario).expect("scenario serializes");
    if let Some(sweep) = &config.sweep {
        let section = SweepSection { parameter: sweep.param.key().to_string(), values: Some(sweep.values.clone()) };
        text.push_str("\n[sweep]\n");
        text.push_str(&toml::to_string(&section).expect("sweep serializes"));
    }
    text
}
