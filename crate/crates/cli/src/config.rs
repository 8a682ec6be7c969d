//! Effective parameters of each subcommand.
//!
//! Precedence is flags, then the config file, then built-in defaults. The
//! resolved struct is echoed into the report's `parameters` field, and a
//! report can be passed back as `--config` to rerun the same analysis.

use std::path::Path;

use anyhow::{anyhow, Context};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use posratio_core::claims::UPPER_CRITICAL_RATIO;
use posratio_core::{
    ClaimsConfig, ForensicsConfig, GeneratorSpec, LabeledSummary, PowerConfig, XKind,
};

use crate::{usage, Outcome};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForensicsParams {
    pub forensics: ForensicsConfig,
    pub samples: Vec<LabeledSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitParams {
    /// Scale of the x column in (x,y) files.
    pub x_var: XKind,
    pub curve_samples: usize,
}

impl Default for FitParams {
    fn default() -> Self {
        Self { x_var: XKind::Ratio, curve_samples: 200 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClaimsParams {
    pub x_var: XKind,
    /// Critical ratios are in ratio units; fraction-scale analyses convert
    /// them.
    pub claims: ClaimsConfig,
    pub upper_threshold: f64,
}

impl Default for ClaimsParams {
    fn default() -> Self {
        Self {
            x_var: XKind::Ratio,
            claims: ClaimsConfig::default(),
            upper_threshold: UPPER_CRITICAL_RATIO,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateParams {
    pub power: PowerConfig,
    /// Empty means the built-in shapes.
    pub specs: Vec<GeneratorSpec>,
    /// With the built-in shapes, add a linear generator matched to the
    /// step's expected group split.
    pub calibrate_linear: bool,
}

impl Default for SimulateParams {
    fn default() -> Self {
        Self {
            power: PowerConfig::default(),
            specs: Vec::new(),
            calibrate_linear: true,
        }
    }
}

/// Reads TOML, or JSON. A JSON report contributes its `parameters` object.
pub fn load_params<T: DeserializeOwned + Default>(path: Option<&Path>) -> Outcome<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))
        .map_err(usage)?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
        || text.trim_start().starts_with('{');
    let parsed = if is_json {
        let mut value: serde_json::Value = serde_json::from_str(&text)
            .with_context(|| format!("config {} is not valid JSON", path.display()))
            .map_err(usage)?;
        if let Some(params) = value.get_mut("parameters") {
            value = params.take();
        }
        serde_json::from_value(value).map_err(|e| anyhow!(e))
    } else {
        toml::from_str(&text).map_err(|e| anyhow!(e))
    };
    parsed
        .with_context(|| format!("invalid config {}", path.display()))
        .map_err(usage)
}
