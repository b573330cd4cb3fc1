use std::fs;
use std::path::Path;

use memsq_core::ProblemSpec;
use serde::{Deserialize, Serialize};

use crate::config::CommandOptions;
use crate::error::{CliError, Result};

pub const SOFTWARE: &str = concat!("memsq ", env!("CARGO_PKG_VERSION"));

/// `Some(v)` for finite `v`. JSON has no NaN, so every optional number goes
/// through here to keep the manifest round-trippable.
pub fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Headline {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_stop: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_hat_refined: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steady_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steady_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub torsion_integral: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub torsion_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower_l22: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper_l22: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper_p33: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper_nopressure: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_exponent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted_amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quench_center: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quench_margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w0_final: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_decay_ok: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_star: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub critical: Vec<CriticalSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalSummary {
    pub pressure: f64,
    pub resolution: usize,
    pub estimate: Option<f64>,
    pub bracket: (f64, f64),
    pub converged: bool,
    pub horizon_limited: bool,
    pub no_admissible_lambda: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub pressure: f64,
    pub quenched: usize,
    pub excluded: usize,
    pub slope: Option<f64>,
    pub r2: Option<f64>,
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub software: String,
    pub command: String,
    pub spec: ProblemSpec,
    pub options: CommandOptions,
    /// `quenched`, `global` or `undecided`, when the command produces one.
    pub verdict: Option<String>,
    pub headline: Headline,
    pub files: Vec<String>,
    pub notes: Vec<String>,
    pub seconds: f64,
}

impl RunManifest {
    pub fn new(command: &str, spec: ProblemSpec, options: CommandOptions) -> Self {
        RunManifest {
            software: SOFTWARE.to_string(),
            command: command.to_string(),
            spec,
            options,
            verdict: None,
            headline: Headline::default(),
            files: Vec::new(),
            notes: Vec::new(),
            seconds: 0.0,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<RunManifest> {
        serde_json::from_str(text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json();
        text.push('\n');
        fs::write(path, text).map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<RunManifest> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        RunManifest::from_json(&text)
            .map_err(|e| CliError::io(path, std::io::Error::new(std::io::ErrorKind::InvalidData, e)))
    }
}
