//! Run outputs: files are collected in memory and only written once the
//! whole command has succeeded, followed by a manifest with checksums.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    /// Seconds since the Unix epoch; taken from `SOURCE_DATE_EPOCH` when set
    /// so that reruns can be byte-identical.
    pub created_unix: u64,
    pub config: BTreeMap<String, String>,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

fn created_unix() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or_else(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        })
}

/// Named output files held in memory, in insertion order.
#[derive(Debug, Default, Clone)]
pub struct OutputSet {
    files: Vec<(String, Vec<u8>)>,
}

impl OutputSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_text(&mut self, name: &str, text: impl Into<String>) {
        self.files
            .push((name.to_string(), text.into().into_bytes()));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.add_text(name, text);
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, d)| d.as_slice())
    }

    pub fn manifest(
        &self,
        command: &str,
        seed: u64,
        config: BTreeMap<String, String>,
    ) -> RunManifest {
        RunManifest {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            created_unix: created_unix(),
            config,
            files: self
                .files
                .iter()
                .map(|(path, data)| FileEntry {
                    path: path.clone(),
                    bytes: data.len(),
                    sha256: sha256_hex(data),
                })
                .collect(),
        }
    }

    /// Writes every file into `dir`, then the manifest.
    pub fn write(&self, dir: &Path, manifest: &RunManifest) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, data) in &self.files {
            if name == MANIFEST_NAME || name.contains(['/', '\\']) {
                return Err(Error::Io(std::io::Error::new(
                    std::io::ErrorKind::InvalidInput,
                    format!("invalid output name `{name}`"),
                )));
            }
            std::fs::write(dir.join(name), data)?;
        }
        let mut text = serde_json::to_string_pretty(manifest)?;
        text.push('\n');
        std::fs::write(dir.join(MANIFEST_NAME), text)?;
        Ok(())
    }
}

/// Checks that every file listed in a manifest still matches its checksum.
pub fn verify_dir(dir: &Path) -> Result<RunManifest> {
    let manifest: RunManifest = serde_json::from_slice(&std::fs::read(dir.join(MANIFEST_NAME))?)?;
    for entry in &manifest.files {
        let data = std::fs::read(dir.join(&entry.path))?;
        if sha256_hex(&data) != entry.sha256 {
            return Err(Error::Parse(format!(
                "checksum mismatch for {}",
                entry.path
            )));
        }
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn write_and_verify() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputSet::new();
        out.add_text("a.csv", "x,y\n1,2\n");
        out.add_json("b.json", &vec![1.0, 2.5]).unwrap();
        let m = out.manifest("test", 7, BTreeMap::new());
        out.write(dir.path(), &m).unwrap();
        let back = verify_dir(dir.path()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.files.len(), 2);
        std::fs::write(dir.path().join("a.csv"), "tampered").unwrap();
        assert!(verify_dir(dir.path()).is_err());
    }

    #[test]
    fn rejects_nested_names() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputSet::new();
        out.add_text("../escape.csv", "");
        let m = out.manifest("test", 0, BTreeMap::new());
        assert!(out.write(dir.path(), &m).is_err());
    }
}
