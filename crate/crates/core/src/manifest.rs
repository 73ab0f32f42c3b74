//! Reproducible experiment manifests.
//!
//! A manifest records everything needed to replay an experiment: the argv of
//! the subcommand, every input file with its content hash, the seed, the tool
//! version, wall-clock timing, and every output file with its content hash.
//! Replaying the recorded command in exact mode must reproduce the output
//! hashes byte for byte; `elapsed_ms` is informative only and excluded from
//! that contract.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Result;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub name: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentManifest {
    /// The subcommand argv, starting at the subcommand name.
    pub command: Vec<String>,
    pub inputs: Vec<InputRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub version: String,
    pub elapsed_ms: u64,
    pub outputs: Vec<OutputRecord>,
}

impl ExperimentManifest {
    pub fn new(command: Vec<String>) -> Self {
        ExperimentManifest {
            command,
            inputs: Vec::new(),
            seed: None,
            version: env!("CARGO_PKG_VERSION").to_string(),
            elapsed_ms: 0,
            outputs: Vec::new(),
        }
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(InputRecord {
            path: path.display().to_string(),
            sha256: hash_file(path)?,
        });
        Ok(())
    }

    pub fn record_output(&mut self, name: &str, bytes: &[u8]) {
        self.outputs.push(OutputRecord {
            name: name.to_string(),
            sha256: sha256_hex(bytes),
        });
    }

    /// True when the other run produced byte-identical outputs (same names,
    /// same hashes, same order). Timing and input paths are not compared.
    pub fn outputs_match(&self, other: &ExperimentManifest) -> bool {
        self.outputs == other.outputs
    }
}
