//! Run directory bookkeeping and the run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use serde_json::json;
use suma_core::config::content_hash;

use crate::settings::Settings;

/// One subcommand's output directory plus the artifacts written into it.
pub struct RunOutput {
    dir: PathBuf,
    artifacts: BTreeMap<String, String>,
}

impl RunOutput {
    pub fn create(root: &Path, command: &str) -> anyhow::Result<Self> {
        let dir = root.join(command);
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir,
            artifacts: BTreeMap::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    pub fn write(&mut self, rel: &str, contents: impl AsRef<[u8]>) -> anyhow::Result<PathBuf> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, contents.as_ref()).with_context(|| format!("writing {}", path.display()))?;
        self.record(rel)?;
        Ok(path)
    }

    /// Registers a file some other writer put under the run directory.
    pub fn record(&mut self, rel: &str) -> anyhow::Result<()> {
        let bytes = std::fs::read(self.dir.join(rel)).with_context(|| format!("hashing {rel}"))?;
        self.artifacts.insert(rel.to_string(), content_hash(&bytes));
        Ok(())
    }

    /// Records every file below `rel_dir`.
    pub fn record_dir(&mut self, rel_dir: &str) -> anyhow::Result<()> {
        let mut names: Vec<String> = std::fs::read_dir(self.dir.join(rel_dir))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_file())
            .map(|e| format!("{rel_dir}/{}", e.file_name().to_string_lossy()))
            .collect();
        names.sort();
        for n in names {
            self.record(&n)?;
        }
        Ok(())
    }

    /// Writes `manifest.json`: everything needed to rerun, no timestamps.
    pub fn finish(self, command: &str, settings: &Settings, seeds: &[u64], extra: serde_json::Value) -> anyhow::Result<()> {
        let config: BTreeMap<&str, &str> = settings.kv.keys().map(|k| (k, settings.str(k))).collect();
        let artifacts: Vec<_> = self
            .artifacts
            .iter()
            .map(|(p, h)| json!({ "path": p, "sha256_16": h }))
            .collect();
        let manifest = json!({
            "command": command,
            "version": suma_core::VERSION,
            "seeds": seeds,
            "config_hash": settings.kv.hash(),
            "config": config,
            "details": extra,
            "artifacts": artifacts,
        });
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(())
    }
}
