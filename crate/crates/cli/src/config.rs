//! Run configuration: one JSON document with every knob of a run.

use std::path::{Path, PathBuf};

use clic_core::harness::CancellerSettings;
use clic_core::scenario::ScenarioConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Root seed; every random stream is derived from it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub cancellers: CancellerSettings,
    #[serde(default)]
    pub output: OutputPaths,
}

/// Artifact locations. Relative file names resolve against the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    /// Used when neither `--out` nor `CLIC_OUT_DIR` is given.
    pub dir: PathBuf,
    pub dataset: PathBuf,
    pub results: PathBuf,
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("clic-out"),
            dataset: PathBuf::from("dataset.clid"),
            results: PathBuf::from("results.csv"),
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            scenario: ScenarioConfig::default(),
            cancellers: CancellerSettings::default(),
            output: OutputPaths::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str, origin: &Path) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            CliError::ConfigField {
                path: origin.to_path_buf(),
                field: if field == "." { "<root>".into() } else { field },
                message: e.into_inner().to_string(),
            }
        })?;
        cfg.validate().map_err(|e| CliError::Config {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text, path)
    }

    pub fn validate(&self) -> clic_core::Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(clic_core::Error::InvalidParameter {
                name: "schema_version",
                reason: format!(
                    "found {}, this build reads version {SCHEMA_VERSION}",
                    self.schema_version
                ),
            });
        }
        self.scenario.validate()?;
        self.cancellers.validate()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
