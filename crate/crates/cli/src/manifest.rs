//! Run manifest: what went in, what came out, and how.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: String,
    pub summary: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    pub catalog_hash: String,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    pub stages: Vec<StageSummary>,
    pub warnings: Vec<String>,
    pub started_at: String,
    pub finished_at: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

/// RFC 3339 timestamp; `SOURCE_DATE_EPOCH` pins it for reproducible builds.
pub fn timestamp() -> String {
    let pinned = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|s| chrono::DateTime::from_timestamp(s, 0));
    pinned
        .unwrap_or_else(chrono::Utc::now)
        .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

impl RunManifest {
    pub fn start(command: &str, config: &RunConfig, catalog_hash: String) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            command: command.to_owned(),
            config: config.clone(),
            catalog_hash,
            inputs: Vec::new(),
            outputs: Vec::new(),
            stages: Vec::new(),
            warnings: Vec::new(),
            started_at: timestamp(),
            finished_at: String::new(),
        }
    }

    pub fn add_input(&mut self, role: &str, path: &Path) -> Result<()> {
        self.inputs.push(FileHash {
            role: role.to_owned(),
            path: path.display().to_string(),
            sha256: hash_file(path)?,
        });
        Ok(())
    }

    /// Records an output by its path relative to the output directory.
    pub fn add_output(&mut self, role: &str, dir: &Path, name: &str) -> Result<()> {
        self.outputs.push(FileHash {
            role: role.to_owned(),
            path: name.to_owned(),
            sha256: hash_file(&dir.join(name))?,
        });
        Ok(())
    }

    pub fn stage(&mut self, stage: &str, summary: serde_json::Value) {
        self.stages.push(StageSummary {
            stage: stage.to_owned(),
            summary,
        });
    }

    /// Stamps the finish time and writes `manifest.json` (or a
    /// command-specific name) into `dir`.
    pub fn finish(mut self, dir: &Path, name: &str) -> Result<Self> {
        self.finished_at = timestamp();
        let mut text = serde_json::to_string_pretty(&self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(dir.join(name), text)?;
        Ok(self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::input(format!("manifest `{}`: {e}", path.display())))
    }

    /// Whether two runs saw the same configuration, catalog and inputs.
    pub fn same_inputs(&self, other: &Self) -> bool {
        self.command == other.command
            && self.version == other.version
            && self.config == other.config
            && self.catalog_hash == other.catalog_hash
            && self.inputs == other.inputs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.csv"), "x\n1\n").unwrap();
        let mut m = RunManifest::start("build-index", &RunConfig::default(), "h".into());
        m.add_output("scores", dir.path(), "a.csv").unwrap();
        m.stage("index", serde_json::json!({ "units": 1 }));
        let m = m.finish(dir.path(), MANIFEST_FILE).unwrap();
        let back = RunManifest::read(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(back, m);
        assert!(back.same_inputs(&m));
    }
}
