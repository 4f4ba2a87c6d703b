//! Run manifests written next to every command's outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct Timestamps {
    pub started_unix: u64,
    pub finished_unix: u64,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub command: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    #[serde(skip_serializing_if = "serde_json::Map::is_empty")]
    pub results: serde_json::Map<String, serde_json::Value>,
    pub timestamps: Timestamps,
}

/// Seconds since the epoch, pinned by `SOURCE_DATE_EPOCH` when set.
fn now_unix() -> u64 {
    if let Some(epoch) = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse().ok())
    {
        return epoch;
    }
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub struct ManifestBuilder {
    manifest: RunManifest,
}

impl ManifestBuilder {
    pub fn start(command: &str, config: impl Serialize) -> Result<Self> {
        let now = now_unix();
        Ok(Self {
            manifest: RunManifest {
                manifest_version: MANIFEST_VERSION,
                tool: "faithtrace",
                tool_version: env!("CARGO_PKG_VERSION"),
                command: command.to_string(),
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                seed: None,
                config: serde_json::to_value(config).context("serializing run config")?,
                results: serde_json::Map::new(),
                timestamps: Timestamps {
                    started_unix: now,
                    finished_unix: now,
                },
            },
        })
    }

    pub fn input(&mut self, name: &str, path: &Path) -> &mut Self {
        self.manifest
            .inputs
            .insert(name.to_string(), path.display().to_string());
        self
    }

    pub fn output(&mut self, name: &str, path: &Path) -> &mut Self {
        self.manifest
            .outputs
            .insert(name.to_string(), path.display().to_string());
        self
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.manifest.seed = Some(seed);
        self
    }

    pub fn result(&mut self, name: &str, value: impl Serialize) -> Result<&mut Self> {
        let v = serde_json::to_value(value).context("serializing run result")?;
        self.manifest.results.insert(name.to_string(), v);
        Ok(self)
    }

    pub fn finish(mut self, path: &Path) -> Result<PathBuf> {
        self.manifest.timestamps.finished_unix = now_unix();
        faithtrace_core::modelio::write_json(path, &self.manifest)?;
        Ok(path.to_path_buf())
    }
}

/// `<file>.manifest.json` next to a file output.
pub fn beside(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}
