//! Run manifests written next to every output file.

use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub config: serde_json::Value,
    pub seed: u64,
    pub tool_version: String,
    pub inputs: Vec<InputDigest>,
    pub started: String,
    pub finished: String,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn digest_file(path: &Path) -> std::io::Result<InputDigest> {
    let bytes = std::fs::read(path)?;
    let sum = Sha256::digest(&bytes);
    let sha256 = sum.iter().map(|b| format!("{b:02x}")).collect();
    Ok(InputDigest { path: path.display().to_string(), sha256 })
}

impl RunManifest {
    pub fn start(config: serde_json::Value, seed: u64, inputs: &[PathBuf]) -> std::io::Result<Self> {
        let inputs = inputs.iter().map(|p| digest_file(p)).collect::<std::io::Result<_>>()?;
        Ok(RunManifest {
            command: std::env::args().collect(),
            config,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            inputs,
            started: now(),
            finished: String::new(),
        })
    }

    pub fn finish(&mut self) {
        self.finished = now();
    }

    /// Writes `<output>.manifest.json`.
    pub fn write_beside(&self, output: &Path) -> std::io::Result<()> {
        let mut name = output.as_os_str().to_owned();
        name.push(".manifest.json");
        std::fs::write(PathBuf::from(name), serde_json::to_string_pretty(self).expect("manifest serializes") + "\n")
    }
}
