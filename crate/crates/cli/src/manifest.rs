//! Run manifests written next to every command's outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use eegemd::synth::SynthConfig;
use eegemd::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::io::write_json_atomic;

pub const DATASET_MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordEntry {
    /// File name relative to the dataset directory.
    pub file: String,
    pub seed: u64,
    pub split: Split,
}

/// What `generate` produced, so later commands can reload it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub synth: SynthConfig,
    pub master_seed: u64,
    pub test_fraction: f64,
    pub split_seed: u64,
    pub records: Vec<RecordEntry>,
}

impl DatasetInfo {
    pub fn entries(&self, split: Split) -> impl Iterator<Item = &RecordEntry> {
        self.records.iter().filter(move |r| r.split == split)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    /// Every option the command ran with.
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub threads: usize,
    pub inputs: Vec<String>,
    pub outputs: Vec<FileDigest>,
    pub duration_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetInfo>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_digest(path: &Path) -> Result<FileDigest> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

/// Collects manifest fields while a command runs.
pub struct ManifestBuilder {
    command: String,
    config: serde_json::Value,
    threads: usize,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<String>,
    outputs: Vec<PathBuf>,
    dataset: Option<DatasetInfo>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: serde_json::Value, threads: usize) -> Self {
        Self {
            command: command.to_string(),
            config,
            threads,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            dataset: None,
            started: Instant::now(),
        }
    }

    pub fn seed(&mut self, name: &str, seed: u64) -> &mut Self {
        self.seeds.insert(name.to_string(), seed);
        self
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.inputs.push(path.display().to_string());
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.to_path_buf());
        self
    }

    pub fn dataset(&mut self, info: DatasetInfo) -> &mut Self {
        self.dataset = Some(info);
        self
    }

    /// Hash the outputs and write the manifest atomically to `path`.
    pub fn write(self, path: &Path) -> Result<RunManifest> {
        let outputs = self
            .outputs
            .iter()
            .map(|p| file_digest(p))
            .collect::<Result<Vec<_>>>()?;
        let manifest = RunManifest {
            command: self.command,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.config,
            seeds: self.seeds,
            threads: self.threads,
            inputs: self.inputs,
            outputs,
            duration_s: self.started.elapsed().as_secs_f64(),
            dataset: self.dataset,
        };
        write_json_atomic(path, &manifest)?;
        Ok(manifest)
    }
}

/// `<file>.manifest.json` beside a command's main output.
pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::CorruptFile {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// The dataset section of `<dir>/manifest.json`.
pub fn read_dataset_info(dir: &Path) -> Result<DatasetInfo> {
    let path = dir.join(DATASET_MANIFEST);
    read_manifest(&path)?.dataset.ok_or_else(|| Error::CorruptFile {
        path,
        message: "manifest has no dataset section".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_known_bytes() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("a.txt");
        fs::write(&out, "hello").unwrap();
        let mut b = ManifestBuilder::new("test", serde_json::json!({"k": 1}), 1);
        b.seed("master", 42).output(&out);
        b.dataset(DatasetInfo {
            synth: SynthConfig::default(),
            master_seed: 42,
            test_fraction: 0.2,
            split_seed: 42,
            records: vec![RecordEntry {
                file: "r.csv".into(),
                seed: 42,
                split: Split::Test,
            }],
        });
        let path = dir.path().join(DATASET_MANIFEST);
        let written = b.write(&path).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), written);
        let info = read_dataset_info(dir.path()).unwrap();
        assert_eq!(info.entries(Split::Test).count(), 1);
        assert_eq!(info.entries(Split::Train).count(), 0);
        assert_eq!(sidecar_path(&out), dir.path().join("a.txt.manifest.json"));
    }
}
