//! Run manifests: a JSON record of what a command read, wrote and resolved,
//! so any experiment can be audited and replayed.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Written next to the outputs of every CLI command.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub command: String,
    pub master_seed: u64,
    /// Resolved configuration, echoed as flat key/value pairs.
    pub config: Vec<(String, String)>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    pub wall_time_seconds: f64,
    #[serde(skip)]
    started: Option<Instant>,
}

impl RunManifest {
    pub fn start(command: &str, master_seed: u64) -> Self {
        Self {
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            master_seed,
            config: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            wall_time_seconds: 0.0,
            started: Some(Instant::now()),
        }
    }

    pub fn echo(&mut self, key: &str, value: impl ToString) {
        self.config.push((key.to_string(), value.to_string()));
    }

    /// Record an input file by digesting the exact bytes that were read.
    pub fn record_input_bytes(&mut self, path: &Path, bytes: &[u8]) {
        let digest = Sha256::digest(bytes);
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: hex_string(&digest),
        });
    }

    pub fn record_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn finish_to_path(mut self, path: &Path) -> std::io::Result<()> {
        if let Some(started) = self.started.take() {
            self.wall_time_seconds = started.elapsed().as_secs_f64();
        }
        let json = serde_json::to_string_pretty(&self).expect("manifest serializes");
        std::fs::write(path, json)
    }
}

fn hex_string(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
