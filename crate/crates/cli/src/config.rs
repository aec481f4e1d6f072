//! Defaults file named by `SPRINTCTL_CONFIG`. Command line flags win over
//! values from the file, which win over built-in defaults.

use std::path::Path;

use serde::Deserialize;
use sprintctl_core::simulator::GeneratorConfig;
use sprintctl_core::{ControlConfig, CurveMetric, CurveMode, Grid};

use crate::error::{CliError, CliResult};

pub const CONFIG_ENV: &str = "SPRINTCTL_CONFIG";

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Defaults {
    pub control: ControlConfig,
    pub build: BuildDefaults,
    pub simulate: GeneratorConfig,
    pub serve: ServeDefaults,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildDefaults {
    pub grid: Grid,
    pub metric: CurveMetric,
    pub mode: CurveMode,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeDefaults {
    pub bind: String,
}

impl Default for ServeDefaults {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".to_string(),
        }
    }
}

impl Defaults {
    pub fn from_toml(path: &Path, text: &str) -> CliResult<Self> {
        let defaults: Self = toml::from_str(text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        defaults.control.validate()?;
        defaults.simulate.validate()?;
        Ok(defaults)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_toml(path, &text)
    }

    /// Reads the file named by `SPRINTCTL_CONFIG`, or built-in defaults when unset.
    pub fn from_env() -> CliResult<Self> {
        match std::env::var_os(CONFIG_ENV) {
            Some(path) if !path.is_empty() => Self::load(Path::new(&path)),
            _ => Ok(Self::default()),
        }
    }
}
