//! Metadata sidecars: `<output>.meta.json` next to every file a command
//! writes, or `meta.json` inside an output directory.

use std::path::{Path, PathBuf};

use anyhow::Context;
use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct Sidecar {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    /// Fully resolved settings: enough to rerun the command.
    pub settings: Value,
    pub config_sha256: String,
    pub started: String,
    pub finished: String,
    pub outputs: Vec<PathBuf>,
}

/// SHA-256 of the canonical (key-sorted, compact) JSON of `settings`.
pub fn config_hash(settings: &Value) -> String {
    let digest = Sha256::digest(settings.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sidecar_path(output: &Path) -> PathBuf {
    if output.is_dir() {
        return output.join("meta.json");
    }
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    output.with_file_name(name)
}

fn stamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub struct Recorder {
    command: String,
    settings: Value,
    started: DateTime<Utc>,
}

impl Recorder {
    pub fn start(command: &str, settings: impl Serialize) -> anyhow::Result<Self> {
        Ok(Self {
            command: command.to_owned(),
            settings: serde_json::to_value(settings).context("serializing settings")?,
            started: Utc::now(),
        })
    }

    /// Writes one sidecar per output. Does nothing when all output went to
    /// standard output.
    pub fn finish(self, outputs: &[&Path]) -> anyhow::Result<()> {
        let Some(first) = outputs.first() else {
            return Ok(());
        };
        let sidecar = Sidecar {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            config_sha256: config_hash(&self.settings),
            settings: self.settings,
            started: stamp(self.started),
            finished: stamp(Utc::now()),
            outputs: outputs.iter().map(|p| p.to_path_buf()).collect(),
        };
        let body = serde_json::to_string_pretty(&sidecar)?;
        let targets: Vec<PathBuf> = if outputs.len() == 1 || first.is_dir() {
            vec![sidecar_path(first)]
        } else {
            outputs.iter().map(|p| sidecar_path(p)).collect()
        };
        for t in targets {
            std::fs::write(&t, &body).with_context(|| format!("writing {}", t.display()))?;
        }
        Ok(())
    }
}
