//! Per-stage `manifest.json`: what produced a directory and from what.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const TOOL_NAME: &str = "lbvs";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn file_sha256(stage: &'static str, path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|source| CliError::Io {
        stage,
        path: path.to_path_buf(),
        source,
    })?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct InputChecksum {
    pub path: String,
    pub sha256: String,
}

/// No timestamps, so identical runs write identical manifests.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub stage: &'static str,
    pub config_sha256: String,
    pub inputs: Vec<InputChecksum>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(stage: &'static str, config_json: &str) -> Self {
        Self {
            tool: TOOL_NAME,
            version: TOOL_VERSION,
            stage,
            config_sha256: sha256_hex(config_json.as_bytes()),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn add_inputs(&mut self, paths: &[PathBuf]) -> Result<(), CliError> {
        for p in paths {
            self.inputs.push(InputChecksum {
                path: p.display().to_string(),
                sha256: file_sha256(self.stage, p)?,
            });
        }
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn write(&mut self, dir: &Path) -> Result<(), CliError> {
        self.inputs.sort_by(|a, b| a.path.cmp(&b.path));
        self.outputs.sort();
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        std::fs::write(&path, text).map_err(|source| CliError::Io {
            stage: self.stage,
            path,
            source,
        })
    }
}
