//! Run manifests: every input and output of a subcommand with its SHA-256.

use crate::error::{Classify, CliResult};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Serialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub tool: String,
    pub version: String,
    pub created_unix_s: u64,
    pub config: serde_json::Value,
    pub config_sha256: String,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn hash_file(path: &Path) -> CliResult<FileHash> {
    let bytes = std::fs::read(path).runtime(format!("hashing {}", path.display()))?;
    Ok(FileHash {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

/// Collects artifact paths while a subcommand runs, then writes
/// `run-<subcommand>.json` into the output directory.
#[derive(Debug)]
pub struct Recorder {
    subcommand: String,
    out_dir: PathBuf,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Recorder {
    pub fn new(subcommand: &str, out_dir: &Path) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            out_dir: out_dir.to_path_buf(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, p: impl AsRef<Path>) {
        self.inputs.push(p.as_ref().to_path_buf());
    }

    pub fn output(&mut self, p: impl AsRef<Path>) {
        self.outputs.push(p.as_ref().to_path_buf());
    }

    pub fn outputs(&mut self, ps: impl IntoIterator<Item = PathBuf>) {
        self.outputs.extend(ps);
    }

    /// Directories among the inputs are expanded to the files they contain.
    pub fn finish(self, config: serde_json::Value) -> CliResult<PathBuf> {
        let config_bytes = serde_json::to_vec(&config).runtime("serialising config")?;
        let mut inputs = Vec::new();
        for p in &self.inputs {
            if p.is_dir() {
                let mut files: Vec<PathBuf> = std::fs::read_dir(p)
                    .runtime(format!("listing {}", p.display()))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.is_file())
                    .collect();
                files.sort();
                for f in files {
                    inputs.push(hash_file(&f)?);
                }
            } else {
                inputs.push(hash_file(p)?);
            }
        }
        let outputs = self.outputs.iter().map(|p| hash_file(p)).collect::<CliResult<Vec<_>>>()?;
        let manifest = RunManifest {
            subcommand: self.subcommand.clone(),
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            config_sha256: sha256_hex(&config_bytes),
            config,
            inputs,
            outputs,
        };
        let path = self.out_dir.join(format!("run-{}.json", self.subcommand));
        let text = serde_json::to_string_pretty(&manifest).runtime("serialising manifest")?;
        std::fs::write(&path, text).runtime(format!("writing {}", path.display()))?;
        Ok(path)
    }
}
