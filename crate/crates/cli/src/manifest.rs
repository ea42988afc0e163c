//! Run manifests and atomic report output.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::command::Command;
use crate::config::{RunConfig, SCHEMA_VERSION};
use crate::error::{CliError, Result};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Cached normaliser of `μ` for one `(space, p)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZCacheEntry {
    pub space: String,
    pub p: f64,
    pub method: String,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    /// Hash of config, command and code version; every report carries it.
    pub manifest_hash: String,
    pub config_hash: String,
    pub code_version: String,
    pub command: String,
    pub seed: u64,
    pub config: RunConfig,
    pub z_cache: Vec<ZCacheEntry>,
    pub stages: Vec<Stage>,
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn new(config: &RunConfig, command: &Command) -> RunManifest {
        let config_hash = sha256_hex(config.hash_input().as_bytes());
        let manifest_hash = sha256_hex(format!("{config_hash}\n{command}\n{CODE_VERSION}").as_bytes());
        RunManifest {
            schema_version: SCHEMA_VERSION,
            manifest_hash,
            config_hash,
            code_version: CODE_VERSION.to_string(),
            command: command.to_string(),
            seed: config.seed,
            config: config.clone(),
            z_cache: Vec::new(),
            stages: Vec::new(),
            warnings: Vec::new(),
        }
    }

    /// Runs `f` and records its wall time under `name`.
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.stages.push(Stage {
            name: name.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source: std::io::Error| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn manifest_path(out: &Path, command: &Command) -> PathBuf {
    out.join(format!("{}.manifest.json", command.stem()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_depends_on_config_and_command_only() {
        let c = RunConfig::from_json(r#"{"schema_version": 1, "space": {"kind": "filiform", "n": 3}, "p": 3}"#).unwrap();
        let a = RunManifest::new(&c, &Command::Sample);
        let b = RunManifest::new(&c, &Command::Sample);
        assert_eq!(a.manifest_hash, b.manifest_hash);
        assert_ne!(a.manifest_hash, RunManifest::new(&c, &Command::Cheeger).manifest_hash);
        let mut c2 = c.clone();
        c2.seed = 9;
        assert_ne!(a.config_hash, RunManifest::new(&c2, &Command::Sample).config_hash);
        let mut c3 = c.clone();
        c3.out = "elsewhere".into();
        assert_eq!(a.manifest_hash, RunManifest::new(&c3, &Command::Sample).manifest_hash);
        assert_eq!(sha256_hex(b"abc").len(), 64);
    }

    #[test]
    fn atomic_writes_replace_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested").join("r.json");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }
}
