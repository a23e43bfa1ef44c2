use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Complete,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub status: StageStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Relative path to sha256 of every file the stage wrote.
    pub files: BTreeMap<String, String>,
    /// Data rows per CSV file, header excluded.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub rows: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_unix: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_sha256: String,
    pub crate_version: String,
    pub checkpoint_version: u32,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    pub fn load_or_default(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Self::default());
        }
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_if_changed(&dir.join(MANIFEST_FILE), text.as_bytes())
    }

    pub fn require(&self, stage: &str) -> Result<&StageRecord> {
        match self.stages.get(stage) {
            Some(r) if r.status == StageStatus::Complete => Ok(r),
            _ => Err(Error::IncompleteRun(stage.to_string())),
        }
    }
}

/// Replace `path` with `bytes` via a temporary sibling and a rename. A file
/// that already holds exactly these bytes is left untouched.
pub fn write_if_changed(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Ok(existing) = std::fs::read(path) {
        if existing == bytes {
            return Ok(());
        }
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = tmp_sibling(path);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn tmp_sibling(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Files produced by one stage, held in memory until the stage succeeds.
#[derive(Debug, Default)]
pub struct StageOutput {
    files: BTreeMap<String, Vec<u8>>,
}

impl StageOutput {
    pub fn add(&mut self, rel: impl Into<String>, bytes: Vec<u8>) {
        self.files.insert(rel.into(), bytes);
    }

    /// Render a file through a writer that takes a path, as the library's
    /// CSV emitters do.
    pub fn add_via(&mut self, rel: &str, scratch: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
        let tmp = scratch.join(rel.replace('/', "__"));
        write(&tmp)?;
        let bytes = std::fs::read(&tmp)?;
        std::fs::remove_file(&tmp)?;
        self.add(rel, bytes);
        Ok(())
    }

    pub fn get(&self, rel: &str) -> Option<&[u8]> {
        self.files.get(rel).map(Vec::as_slice)
    }

    pub fn commit(self, dir: &Path) -> Result<StageRecord> {
        let mut files = BTreeMap::new();
        let mut rows = BTreeMap::new();
        for (rel, bytes) in &self.files {
            write_if_changed(&dir.join(rel), bytes)?;
            files.insert(rel.clone(), sha256_hex(bytes));
            if rel.ends_with(".csv") {
                let lines = bytes.iter().filter(|&&b| b == b'\n').count();
                rows.insert(rel.clone(), lines.saturating_sub(1));
            }
        }
        Ok(StageRecord {
            status: StageStatus::Complete,
            error: None,
            files,
            rows,
            finished_unix: None,
        })
    }
}
