//! Run manifests: provenance sidecars written next to every output.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// What a subcommand consumed and produced. Sidecar files are named
/// `manifest.json` (directory outputs) or `<file>.manifest.json`, so
/// byte-level output comparisons can exclude them; chaining the input and
/// output paths across manifests reconstructs the pipeline graph.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub inputs: BTreeMap<String, PathBuf>,
    pub outputs: BTreeMap<String, PathBuf>,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub started: DateTime<Utc>,
    pub finished: DateTime<Utc>,
}

pub struct ManifestBuilder {
    subcommand: String,
    inputs: BTreeMap<String, PathBuf>,
    outputs: BTreeMap<String, PathBuf>,
    seed: Option<u64>,
    started: DateTime<Utc>,
}

impl ManifestBuilder {
    pub fn new(subcommand: &str) -> Self {
        ManifestBuilder {
            subcommand: subcommand.to_string(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            seed: None,
            started: Utc::now(),
        }
    }

    pub fn input(&mut self, name: &str, path: &Path) -> &mut Self {
        self.inputs.insert(name.to_string(), path.to_path_buf());
        self
    }

    pub fn output(&mut self, name: &str, path: &Path) -> &mut Self {
        self.outputs.insert(name.to_string(), path.to_path_buf());
        self
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seed = Some(seed);
        self
    }

    /// Finish and write the sidecar next to `anchor` (a file output) or
    /// inside it (a directory output).
    pub fn write(&self, anchor: &Path) -> std::io::Result<PathBuf> {
        let manifest = RunManifest {
            subcommand: self.subcommand.clone(),
            inputs: self.inputs.clone(),
            outputs: self.outputs.clone(),
            seed: self.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started: self.started,
            finished: Utc::now(),
        };
        let path = if anchor.is_dir() {
            anchor.join("manifest.json")
        } else {
            let mut name = anchor.file_name().unwrap_or_default().to_os_string();
            name.push(".manifest.json");
            anchor.with_file_name(name)
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&path, json + "\n")?;
        Ok(path)
    }
}
