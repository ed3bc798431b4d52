use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::Command;
use crate::error::{Error, Result};

/// JSON sidecar written next to every output file. It carries no
/// timestamps, so reruns with the same inputs produce the same manifest.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub flags: serde_json::Value,
    pub checkpoint_sha256: Option<String>,
    pub seed: Option<u64>,
    pub policy: Option<String>,
}

pub fn checkpoint_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunManifest {
    pub fn new(
        command: &Command,
        checkpoint_sha256: Option<String>,
        seed: Option<u64>,
        policy: Option<String>,
    ) -> Result<Self> {
        Ok(RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.name().to_string(),
            flags: serde_json::to_value(command).map_err(|e| Error::Parse(e.to_string()))?,
            checkpoint_sha256,
            seed,
            policy,
        })
    }

    /// `<out>.manifest.json`
    pub fn path_for(out: &Path) -> PathBuf {
        let mut name = out.as_os_str().to_owned();
        name.push(".manifest.json");
        PathBuf::from(name)
    }

    pub fn write_beside(&self, out: &Path) -> Result<()> {
        let path = Self::path_for(out);
        let mut json = serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))?;
        json.push('\n');
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }
}
