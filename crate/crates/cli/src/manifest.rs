use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Record of one command invocation, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub deterministic: bool,
    /// SHA-256 of each input file or directory tree.
    pub inputs: BTreeMap<String, String>,
    pub tool_version: String,
    pub started_unix: f64,
    pub finished_unix: Option<f64>,
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

impl RunManifest {
    pub fn start(config: serde_json::Value, seed: Option<u64>, deterministic: bool) -> Self {
        Self {
            command: std::env::args().collect(),
            config,
            seed,
            deterministic,
            inputs: BTreeMap::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: unix_now(),
            finished_unix: None,
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), hash_path(path)?);
        Ok(())
    }

    pub fn finish(mut self, path: &Path) -> Result<()> {
        self.finished_unix = Some(unix_now());
        let text = serde_json::to_string_pretty(&self)?;
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}

/// Where the manifest of an output goes: inside an output directory, or
/// beside an output file.
pub fn manifest_path(out: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        out.join("manifest.json")
    } else {
        let mut name = out.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        out.with_file_name(name)
    }
}

fn files_under(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.is_dir() {
            files_under(root, &path, out)?;
        } else if path.file_name().is_some_and(|n| n != "manifest.json") {
            out.push(path.strip_prefix(root)?.to_path_buf());
        }
    }
    Ok(())
}

/// Hex SHA-256 of a file, or of a directory's files (relative paths and
/// contents, sorted by path). Manifests are left out.
pub fn hash_path(path: &Path) -> Result<String> {
    let mut h = Sha256::new();
    if path.is_dir() {
        let mut files = Vec::new();
        files_under(path, path, &mut files)?;
        files.sort();
        for f in files {
            let bytes = std::fs::read(path.join(&f)).with_context(|| format!("reading {}", f.display()))?;
            h.update(f.to_string_lossy().as_bytes());
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(&bytes);
        }
    } else {
        h.update(std::fs::read(path).with_context(|| format!("reading {}", path.display()))?);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}
