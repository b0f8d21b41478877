use mtsysid::CvResult;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemResult {
    pub index: usize,
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub prediction_error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frobenius_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSummary {
    pub initial: f64,
    #[serde(rename = "final")]
    pub last: f64,
    pub iterations: usize,
    pub converged: bool,
    pub final_step: f64,
}

/// Everything one run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsRecord {
    pub schema_version: u32,
    pub tool_version: String,
    pub method: String,
    pub systems: Vec<SystemResult>,
    pub mean_prediction_error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_frobenius_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<ObjectiveSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv: Option<CvResult>,
    pub runtime_seconds: f64,
    pub config: ExperimentConfig,
}

impl ResultsRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record fields are always serializable")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// The record with the wall-clock field cleared, for reproducibility checks.
    pub fn without_runtime(&self) -> Self {
        Self {
            runtime_seconds: 0.0,
            ..self.clone()
        }
    }
}
