//! Provenance record written next to every output file as
//! `<output>.manifest.json`.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Versions {
    pub shapprop: String,
    pub manifest_format: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Every flag value the command ran with.
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub versions: Versions,
    /// Milliseconds since the Unix epoch.
    pub started_ms: u128,
    pub finished_ms: u128,
    pub inputs: Vec<InputDigest>,
    pub output: String,
}

pub fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis())
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

impl RunManifest {
    pub fn new(
        command: &str,
        config: serde_json::Value,
        seed: Option<u64>,
        started_ms: u128,
    ) -> Self {
        Self {
            command: command.into(),
            config,
            seed,
            versions: Versions {
                shapprop: env!("CARGO_PKG_VERSION").into(),
                manifest_format: MANIFEST_FORMAT,
            },
            started_ms,
            finished_ms: started_ms,
            inputs: Vec::new(),
            output: String::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> std::io::Result<()> {
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    /// Stamps the finish time and writes the sidecar for `output`.
    pub fn write_for(mut self, output: &Path) -> std::io::Result<PathBuf> {
        self.output = output.display().to_string();
        self.finished_ms = now_ms();
        let path = manifest_path(output);
        let mut bytes = serde_json::to_vec_pretty(&self).map_err(std::io::Error::other)?;
        bytes.push(b'\n');
        std::fs::write(&path, bytes)?;
        Ok(path)
    }
}
