//! TOML run configuration. Every section is optional; command-line flags
//! override file values.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vistacast_core::fusion::LabelSource;
use vistacast_core::quality::DEFAULT_GRAY_THRESHOLD;
use vistacast_gbdt::GbdtParams;

use crate::error::UserError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub qc: QcSettings,
    pub fusion: FusionSettings,
    pub eval: EvalSettings,
    pub gbdt: GbdtParams,
    pub collect: CollectSettings,
    pub service: ServiceSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QcSettings {
    pub threshold: f64,
}

impl Default for QcSettings {
    fn default() -> Self {
        Self { threshold: DEFAULT_GRAY_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSettings {
    pub theta: f64,
    pub label_source: LabelSource,
}

impl Default for FusionSettings {
    fn default() -> Self {
        Self { theta: 0.5, label_source: LabelSource::Vision }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub seed: u64,
    pub folds: usize,
    pub include_meta: bool,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { seed: 0, folds: 5, include_meta: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectSettings {
    pub source: SourceMode,
    /// Recorded responses for `source = "fixture"`.
    pub fixtures: Option<PathBuf>,
    pub endpoint: String,
    pub timeout_secs: u64,
    pub max_attempts: u32,
}

impl Default for CollectSettings {
    fn default() -> Self {
        Self {
            source: SourceMode::Fixture,
            fixtures: None,
            endpoint: vistacast_core::ingest::DEFAULT_ENDPOINT.to_string(),
            timeout_secs: 30,
            max_attempts: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceMode {
    Fixture,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSettings {
    pub addr: String,
    pub lease_secs: u64,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        Self { addr: "127.0.0.1:8080".into(), lease_secs: 120 }
    }
}

impl Settings {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).map_err(|e| UserError(format!("{}: {e}", path.display())).into())
    }

    /// Hex SHA-256 of the effective settings as canonical JSON.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("settings serialize");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
