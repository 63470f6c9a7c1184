use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use gridwx_core::ingest::{sha256_file, HASH_ALGORITHM};
use gridwx_core::RunConfig;
use serde::Serialize;

pub const MANIFEST: &str = "manifest.json";

/// Written last into every output directory.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub toolkit_version: String,
    pub hash_algorithm: String,
    /// Effective configuration after flags were applied.
    pub config: BTreeMap<String, String>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub wall_time_s: f64,
}

/// An output directory that tracks the hash of everything written into it.
pub struct OutDir {
    root: PathBuf,
    outputs: BTreeMap<String, String>,
    started: Instant,
}

impl OutDir {
    pub fn create(root: &Path) -> anyhow::Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(OutDir {
            root: root.to_path_buf(),
            outputs: BTreeMap::new(),
            started: Instant::now(),
        })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> anyhow::Result<()> {
        let p = self.path(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
        self.record(rel)
    }

    /// Serialize into a buffer with `f`, then write.
    pub fn with<F>(&mut self, rel: &str, f: F) -> anyhow::Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> anyhow::Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(rel, &buf)
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, rel: &str, value: &T) -> anyhow::Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(rel, s.as_bytes())
    }

    /// Hash a file some other writer already put under the root.
    pub fn record(&mut self, rel: &str) -> anyhow::Result<()> {
        let hash = sha256_file(&self.path(rel))?;
        self.outputs.insert(rel.to_string(), hash);
        Ok(())
    }

    /// Echo the effective configuration as a loadable config file.
    pub fn config(&mut self, cfg: &RunConfig) -> anyhow::Result<()> {
        let text: String = cfg.to_pairs().iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        self.write("config.cfg", text.as_bytes())
    }

    pub fn finish(
        self,
        command: &str,
        config: BTreeMap<String, String>,
        inputs: BTreeMap<String, String>,
    ) -> anyhow::Result<()> {
        let m = RunManifest {
            command: command.to_string(),
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            hash_algorithm: HASH_ALGORITHM.to_string(),
            config,
            inputs,
            outputs: self.outputs,
            wall_time_s: self.started.elapsed().as_secs_f64(),
        };
        let mut s = serde_json::to_string_pretty(&m)?;
        s.push('\n');
        std::fs::write(self.root.join(MANIFEST), s)?;
        Ok(())
    }
}

pub fn config_map(cfg: &RunConfig) -> BTreeMap<String, String> {
    cfg.to_pairs().into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}
