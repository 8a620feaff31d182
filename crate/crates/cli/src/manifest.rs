// SPDX-License-Identifier: Apache-2.0

//! Run manifests: the resolved settings, seeds, tool version and SHA-256
//! digests of every input and output file.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::settings::Settings;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Settings with every default the command used filled in. `out_dir`
    /// is left unset; output paths are relative to it.
    pub settings: Settings,
    /// Base seed followed by any per-output seeds.
    pub seeds: Vec<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<FileDigest> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

/// Output directory that records the digest of everything written to it.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<FileDigest>,
}

impl Outputs {
    pub fn create(dir: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir,
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, content: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(FileDigest {
            path: name.to_string(),
            sha256: sha256_hex(content.as_bytes()),
        });
        Ok(())
    }

    pub fn finish(self, mut manifest: Manifest) -> Result<Manifest> {
        manifest.outputs = self.written;
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        let path = self.dir.join(MANIFEST_NAME);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(manifest)
    }
}

pub fn load(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
