//! Per-invocation state: output directory, thread pool and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Git-style object hash: sha256 over `"blob {len}\0"` followed by the content.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    pub seed: u64,
    pub threads: usize,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, FileRecord>,
    pub outputs: BTreeMap<String, FileRecord>,
    pub notes: BTreeMap<String, serde_json::Value>,
}

pub struct Run {
    pub out: PathBuf,
    pub threads: usize,
    manifest: Manifest,
}

impl Run {
    pub fn start(command: &str, out: PathBuf, seed: u64, threads: usize, config: serde_json::Value) -> Result<Run, CliError> {
        fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
        Ok(Run {
            out,
            threads,
            manifest: Manifest {
                command: command.to_string(),
                version: env!("CARGO_PKG_VERSION"),
                seed,
                threads,
                config,
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                notes: BTreeMap::new(),
            },
        })
    }

    /// Single-threaded runs promise byte-identical artifacts, so they omit wall-clock time.
    pub fn reproducible(&self) -> bool {
        self.threads == 1
    }

    pub fn read_input(&mut self, role: &str, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.record_input(role, path, &bytes);
        Ok(bytes)
    }

    pub fn read_input_text(&mut self, role: &str, path: &Path) -> Result<String, CliError> {
        let bytes = self.read_input(role, path)?;
        String::from_utf8(bytes).map_err(|_| CliError::Usage(format!("{}: not UTF-8 text", path.display())))
    }

    pub fn record_input(&mut self, role: &str, path: &Path, bytes: &[u8]) {
        self.manifest
            .inputs
            .insert(role.to_string(), FileRecord { path: path.display().to_string(), sha256: content_hash(bytes) });
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.out.join(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.manifest.outputs.insert(name.to_string(), FileRecord { path: name.to_string(), sha256: content_hash(bytes) });
        Ok(path)
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("plain data serializes");
        self.manifest.notes.insert(key.to_string(), v);
    }

    pub fn finish(self) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(&self.manifest).expect("plain data serializes") + "\n";
        let path = self.out.join("manifest.json");
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}
