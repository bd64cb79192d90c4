use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Provenance record written next to every stage's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config_digest: String,
    /// Input path (or bundled fixture name) to SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Output file name to SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub timings_ms: BTreeMap<String, f64>,
}

pub struct Recorder {
    manifest: RunManifest,
    out: PathBuf,
    started: Instant,
}

impl Recorder {
    pub fn new<C: Serialize>(command: &str, seed: Option<u64>, config: &C, out: &Path) -> Result<Self, CliError> {
        let config = serde_json::to_vec(config).map_err(|e| CliError::Stage(e.to_string()))?;
        std::fs::create_dir_all(out).map_err(|e| CliError::output(out, e))?;
        Ok(Self {
            manifest: RunManifest {
                tool: "econkg".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                command: command.into(),
                seed,
                config_digest: sha256_hex(&config),
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                timings_ms: BTreeMap::new(),
            },
            out: out.to_path_buf(),
            started: Instant::now(),
        })
    }

    /// Reads an input file and records its digest.
    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::input(path, e))?;
        self.manifest
            .inputs
            .insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    pub fn read_string(&mut self, path: &Path) -> Result<String, CliError> {
        let bytes = self.read(path)?;
        String::from_utf8(bytes).map_err(|e| CliError::input(path, e))
    }

    pub fn note_input(&mut self, name: &str, bytes: &[u8]) {
        self.manifest.inputs.insert(name.into(), sha256_hex(bytes));
    }

    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let v = f();
        *self.manifest.timings_ms.entry(stage.into()).or_default() += t.elapsed().as_secs_f64() * 1e3;
        v
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.out.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::output(&path, e))?;
        self.manifest.outputs.insert(name.into(), sha256_hex(bytes));
        Ok(path)
    }

    /// Records a file some other component already wrote under `out`.
    pub fn written(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::output(path, e))?;
        let name = path
            .strip_prefix(&self.out)
            .unwrap_or(path)
            .display()
            .to_string();
        self.manifest.outputs.insert(name, sha256_hex(&bytes));
        Ok(())
    }

    pub fn finish(mut self) -> Result<RunManifest, CliError> {
        self.manifest
            .timings_ms
            .insert("total".into(), self.started.elapsed().as_secs_f64() * 1e3);
        let path = self.out.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(&self.manifest).map_err(|e| CliError::Stage(e.to_string()))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::output(&path, e))?;
        Ok(self.manifest)
    }
}
