//! Run manifests: every output file is written alongside a manifest holding
//! the resolved configuration, seed, timestamps, and output paths, so any
//! output can be reproduced from its manifest alone.

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use super::CliError;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub outputs: Vec<String>,
    pub version: String,
}

impl RunManifest {
    pub fn start(command: &str, config: serde_json::Value, seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            config,
            seed,
            started_at: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
            finished_at: None,
            outputs: Vec::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    /// Stamp the end time and render the manifest document.
    pub fn finish(mut self) -> Result<String, CliError> {
        self.finished_at = Some(Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true));
        serde_json::to_string_pretty(&self)
            .map_err(|e| CliError::Internal(format!("manifest serialization: {e}")))
    }
}
