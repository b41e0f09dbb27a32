use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Record of one command invocation. The wall time is the only field that
/// differs between identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the command's effective parameters.
    pub config_hash: String,
    /// The parameters that were hashed.
    pub params: serde_json::Value,
    /// SHA-256 over the dataset files, when a dataset is involved.
    pub dataset_hash: Option<String>,
    pub seed: Option<u64>,
    pub artifacts: Vec<String>,
    pub wall_time_s: f64,
}

impl RunManifest {
    pub fn new(command: &str, params: &impl Serialize) -> Self {
        let bytes = serde_json::to_vec(params).expect("parameters serialize");
        let params = serde_json::to_value(params).expect("parameters serialize");
        RunManifest {
            command: command.to_string(),
            config_hash: hex::encode(Sha256::digest(bytes)),
            params,
            dataset_hash: None,
            seed: None,
            artifacts: Vec::new(),
            wall_time_s: 0.0,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }
}
