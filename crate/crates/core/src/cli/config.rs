use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constraint::ConstraintSet;
use crate::dynamics::{Coefficients, SchemeConfig};
use crate::error::{Error, Result};
use crate::measure::InitialLaw;

pub const SCHEMA_VERSION: u32 = 1;

/// Versioned run configuration, read from TOML. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialLaw>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Coefficients>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<ConstraintSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<SchemeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub n_particles: usize,
    pub n_steps: usize,
    pub horizon: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub substep: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub eps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "default_trajectory")]
    pub trajectory: String,
    #[serde(default = "default_diagnostics")]
    pub diagnostics: String,
    #[serde(default = "default_sweep_summary")]
    pub sweep_summary: String,
}

fn default_record_every() -> usize {
    1
}
fn default_trajectory() -> String {
    "trajectory.csv".to_string()
}
fn default_diagnostics() -> String {
    "diagnostics.csv".to_string()
}
fn default_sweep_summary() -> String {
    "sweep.csv".to_string()
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            record_every: default_record_every(),
            trajectory: default_trajectory(),
            diagnostics: default_diagnostics(),
            sweep_summary: default_sweep_summary(),
        }
    }
}

/// Everything `simulate` needs, validated.
#[derive(Debug, Clone)]
pub struct SimulationSetup {
    pub initial: InitialLaw,
    pub coefficients: Coefficients,
    pub constraint: ConstraintSet,
    pub scheme: SchemeConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(error_key(&e), e.message().trim()))?;
        if cfg.version != SCHEMA_VERSION {
            return Err(Error::config(
                "version",
                format!("unsupported schema version {}, expected {SCHEMA_VERSION}", cfg.version),
            ));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("--config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    pub fn constraint(&self) -> Result<&ConstraintSet> {
        self.constraint
            .as_ref()
            .ok_or_else(|| Error::config("constraint", "section is required"))
    }

    /// Validates every section a simulation needs against one dimension.
    pub fn simulation(&self) -> Result<SimulationSetup> {
        let initial = self
            .initial
            .clone()
            .ok_or_else(|| Error::config("initial", "section is required"))?;
        let coefficients = self
            .coefficients
            .clone()
            .ok_or_else(|| Error::config("coefficients", "section is required"))?;
        let constraint = self.constraint()?.clone();
        let s = self
            .scheme
            .as_ref()
            .ok_or_else(|| Error::config("scheme", "section is required"))?;
        initial.validate()?;
        let dim = initial.dim();
        coefficients.validate(dim)?;
        constraint.validate(dim)?;
        let scheme = SchemeConfig {
            n_particles: s.n_particles,
            n_steps: s.n_steps,
            horizon: s.horizon,
            epsilon: s.epsilon,
            record_every: self.output.record_every,
            seed: self.seed,
            substep: s.substep,
        };
        scheme.validate().map_err(|e| match e {
            Error::Config { key, message } if key == "scheme.record_every" => {
                Error::config("output.record_every", message)
            }
            other => other,
        })?;
        Ok(SimulationSetup {
            initial,
            coefficients,
            constraint,
            scheme,
        })
    }
}

/// Best-effort dotted key path from a TOML error message.
fn error_key(e: &toml::de::Error) -> String {
    let msg = e.message();
    if let Some(rest) = msg.split("unknown field `").nth(1) {
        if let Some(field) = rest.split('`').next() {
            return field.to_string();
        }
    }
    if let Some(rest) = msg.split("missing field `").nth(1) {
        if let Some(field) = rest.split('`').next() {
            return field.to_string();
        }
    }
    "config".to_string()
}
