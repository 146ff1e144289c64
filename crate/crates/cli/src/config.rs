//! JSON configuration: scheme lengths, key capacity, encoding, endpoint and
//! file locations.

use std::path::{Path, PathBuf};

use graphsig::gencoding::EncodingScheme;
use graphsig::keys::{GraphParams, KeyGenParams};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Directory holding key material.
    pub keys: PathBuf,
    pub credential: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub params: KeyGenParams,
    pub graph: GraphParams,
    pub encoding: String,
    pub endpoint: String,
    pub paths: Paths,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            params: KeyGenParams::default(),
            graph: GraphParams { max_vertices: 16, max_edges: 32 },
            encoding: "geolocation".into(),
            endpoint: "127.0.0.1:7400".into(),
            paths: Paths { keys: PathBuf::from("keys"), credential: PathBuf::from("credential.json") },
        }
    }
}

impl Config {
    /// Rejects configurations the library would refuse later anyway.
    pub fn validate(&self) -> Result<(), CliError> {
        self.params.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.graph.validate().map_err(|e| CliError::Config(e.to_string()))?;
        EncodingScheme::by_id(&self.encoding).map_err(|e| CliError::Config(e.to_string()))?;
        if self.endpoint.is_empty() {
            return Err(CliError::Config("endpoint is empty".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let config: Config = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_json()).map_err(|e| CliError::io(path, e))
    }

    pub fn key_file(&self, name: &str) -> PathBuf {
        self.paths.keys.join(name)
    }
}
