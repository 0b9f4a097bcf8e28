use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `bytes` to a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
    pub stage: String,
    /// Hash of the config the producing stage ran under.
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub dataset_fingerprint: Option<String>,
    /// Sorted by path.
    pub artifacts: Vec<ArtifactEntry>,
    /// In execution order; a rerun stage replaces its earlier entry.
    pub stages: Vec<StageTiming>,
}

impl RunManifest {
    pub fn new(config: &ExperimentConfig) -> Self {
        RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.hash(),
            config: config.clone(),
            dataset_fingerprint: None,
            artifacts: Vec::new(),
            stages: Vec::new(),
        }
    }

    pub fn load(dir: &Path) -> Result<Option<Self>> {
        let path = dir.join(MANIFEST);
        match fs::read(&path) {
            Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        write_atomic(&dir.join(MANIFEST), &bytes)
    }

    pub fn artifact(&self, path: &str) -> Option<&ArtifactEntry> {
        self.artifacts.iter().find(|a| a.path == path)
    }

    /// Re-hashes every listed artifact.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for a in &self.artifacts {
            let path = dir.join(&a.path);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            if sha256_hex(&bytes) != a.sha256 {
                return Err(Error::Contract(format!("{} does not match its recorded hash", a.path)));
            }
        }
        Ok(())
    }

    pub(crate) fn record(&mut self, stage: &str, config_hash: &str, written: &[(String, String)], seconds: f64) {
        self.artifacts
            .retain(|a| a.stage != stage && !written.iter().any(|(p, _)| *p == a.path));
        self.artifacts
            .extend(written.iter().map(|(path, sha256)| ArtifactEntry {
                path: path.clone(),
                sha256: sha256.clone(),
                stage: stage.to_string(),
                config_hash: config_hash.to_string(),
            }));
        self.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        self.stages.retain(|s| s.stage != stage);
        self.stages.push(StageTiming {
            stage: stage.to_string(),
            seconds,
        });
    }
}

/// Collects the files one stage writes so they can be removed if the
/// stage fails.
pub(crate) struct StageWriter {
    dir: PathBuf,
    pub(crate) written: Vec<(String, String)>,
}

impl StageWriter {
    pub(crate) fn new(dir: &Path) -> Self {
        StageWriter {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        }
    }

    pub(crate) fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.written.push((name.to_string(), sha256_hex(bytes)));
        Ok(())
    }

    pub(crate) fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub(crate) fn discard(&self) {
        for (name, _) in &self.written {
            let _ = fs::remove_file(self.dir.join(name));
        }
    }
}

/// Comma-separated table with a header; cells are written with `Display`,
/// which gives the shortest round-trip form for floats.
pub(crate) struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub(crate) fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub(crate) fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| Error::Contract(format!("csv buffer: {e}")))
    }
}

pub(crate) fn cell(v: impl Display) -> String {
    v.to_string()
}

/// Reads an upstream artifact, naming the subcommand that produces it when
/// it is absent.
pub(crate) fn require(dir: &Path, name: &str, producer: &'static str) -> Result<Vec<u8>> {
    let path = dir.join(name);
    match fs::read(&path) {
        Ok(b) => Ok(b),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingArtifact { path, producer }),
        Err(e) => Err(Error::io(path, e)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_formats_floats_shortest() {
        let mut t = Table::new(["a", "b"]);
        t.push(vec![cell(0.1), cell(1.0)]);
        t.push(vec![cell(1e-7), cell("x,y")]);
        let s = String::from_utf8(t.to_bytes().unwrap()).unwrap();
        assert_eq!(s, "a,b\n0.1,1\n0.0000001,\"x,y\"\n");
    }

    #[test]
    fn writer_discards_on_failure() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = StageWriter::new(dir.path());
        w.write("a.csv", b"x").unwrap();
        assert!(dir.path().join("a.csv").exists());
        w.discard();
        assert!(!dir.path().join("a.csv").exists());
    }

    #[test]
    fn missing_artifact_names_producer() {
        let dir = tempfile::tempdir().unwrap();
        let e = require(dir.path(), "pool.json", "train-pool").unwrap_err();
        assert!(e.to_string().contains("train-pool"));
    }
}
