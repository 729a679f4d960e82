//! Atomic file output and the run manifest.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644))?;
    }
    tmp.persist(path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub seed_source: Option<&'static str>,
    pub exec: &'static str,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    pub wall_time_s: f64,
}

/// Collects what a command read and produced, then writes everything at the end.
pub struct Run {
    started: Instant,
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<(u64, &'static str)>,
    inputs: Vec<FileHash>,
    outputs: Vec<(Option<PathBuf>, Vec<u8>)>,
}

impl Run {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            started: Instant::now(),
            command: command.into(),
            config,
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn read_input(&mut self, path: &Path) -> anyhow::Result<String> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(FileHash { path: path.display().to_string(), sha256: sha256_hex(&bytes) });
        String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))
    }

    /// Queues an output; `None` means standard output.
    pub fn emit(&mut self, path: Option<PathBuf>, bytes: impl Into<Vec<u8>>) {
        self.outputs.push((path, bytes.into()));
    }

    /// Writes the queued outputs, then the manifest to `manifest`, or next to
    /// the first file output, or to standard error.
    pub fn finish(self, manifest: Option<&Path>, exec: &'static str) -> anyhow::Result<()> {
        let mut hashes = Vec::new();
        let mut first_file: Option<PathBuf> = None;
        for (path, bytes) in &self.outputs {
            match path {
                Some(p) => {
                    write_atomic(p, bytes)?;
                    first_file.get_or_insert_with(|| p.clone());
                    hashes.push(FileHash { path: p.display().to_string(), sha256: sha256_hex(bytes) });
                }
                None => {
                    std::io::stdout().write_all(bytes)?;
                    hashes.push(FileHash { path: "-".into(), sha256: sha256_hex(bytes) });
                }
            }
        }
        std::io::stdout().flush()?;
        let doc = RunManifest {
            tool: "gmmcc",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            args: std::env::args().skip(1).collect(),
            config: self.config,
            seed: self.seed.map(|s| s.0),
            seed_source: self.seed.map(|s| s.1),
            exec,
            inputs: self.inputs,
            outputs: hashes,
            wall_time_s: self.started.elapsed().as_secs_f64(),
        };
        let text = serde_json::to_string_pretty(&doc)? + "\n";
        let target = manifest.map(Path::to_path_buf).or_else(|| first_file.map(|p| manifest_beside(&p)));
        match target {
            Some(p) => write_atomic(&p, text.as_bytes()),
            None => {
                eprint!("{text}");
                Ok(())
            }
        }
    }
}

fn manifest_beside(path: &Path) -> PathBuf {
    if path.file_name().is_some_and(|n| n == "model.lp") {
        return path.with_file_name("manifest.json");
    }
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    path.with_file_name(name)
}
