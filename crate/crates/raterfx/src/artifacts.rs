//! Atomic artifact writing and the content-hash manifest.
//!
//! Artifacts are written to a temp file in the output directory and renamed
//! into place, so an interrupted run leaves nothing half-written under the
//! manifest. The manifest lists every artifact with its SHA-256 and byte
//! count; identical inputs and seeds reproduce it byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifacts: Vec<ManifestEntry>,
}

pub struct ArtifactWriter {
    out_dir: PathBuf,
    entries: BTreeMap<String, ManifestEntry>,
}

impl ArtifactWriter {
    pub fn new(out_dir: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(out_dir)?;
        Ok(Self {
            out_dir: out_dir.to_path_buf(),
            entries: BTreeMap::new(),
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    /// Writes bytes atomically (temp file + rename) and records the entry.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<PathBuf> {
        let target = self.out_dir.join(name);
        let tmp = self.out_dir.join(format!(".{name}.tmp"));
        {
            let mut file = fs::File::create(&tmp)?;
            file.write_all(bytes)?;
            file.sync_all()?;
        }
        fs::rename(&tmp, &target)?;
        let mut hasher = Sha256::new();
        hasher.update(bytes);
        let digest = hasher.finalize();
        let sha256 = digest
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect::<String>();
        self.entries.insert(
            name.to_string(),
            ManifestEntry {
                path: name.to_string(),
                bytes: bytes.len(),
                sha256,
            },
        );
        Ok(target)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<PathBuf> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            artifacts: self.entries.values().cloned().collect(),
        }
    }

    /// Writes `manifest.json` listing every artifact written so far (the
    /// manifest does not list itself).
    pub fn write_manifest(&mut self) -> anyhow::Result<PathBuf> {
        let manifest = self.manifest();
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        let target = self.out_dir.join("manifest.json");
        let tmp = self.out_dir.join(".manifest.json.tmp");
        fs::write(&tmp, &bytes)?;
        fs::rename(&tmp, &target)?;
        Ok(target)
    }
}
