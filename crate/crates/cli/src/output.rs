use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use pwl_regions::data::write_atomic;
use serde::Serialize;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub argv: Vec<String>,
    pub seed: u64,
    pub threads: usize,
    pub format: String,
    pub generator: String,
    pub network_format_version: u32,
    /// Seeds derived for ensembles or streams, keyed by purpose.
    pub seeds: BTreeMap<String, serde_json::Value>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

/// Single writer for an output directory. Every file goes through a temp file
/// and a rename; the manifest is written last.
pub struct OutputDir {
    root: PathBuf,
    manifest: Manifest,
}

impl OutputDir {
    pub fn create(root: &Path, manifest: Manifest) -> Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self { root: root.to_path_buf(), manifest })
    }

    pub fn record_seed(&mut self, key: &str, value: impl Serialize) {
        let value = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.manifest.seeds.insert(key.to_string(), value);
    }

    pub fn record_input(&mut self, key: &str, path: &Path) {
        self.manifest.inputs.insert(key.to_string(), path.display().to_string());
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        write_atomic(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.manifest.outputs.push(name.to_string());
        Ok(path)
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<PathBuf> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in rows {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {e}"))?;
        self.write_bytes(name, &bytes)
    }

    /// Writes rows as `<stem>.csv` or `<stem>.json` depending on the format.
    pub fn write_table<T: Serialize>(&mut self, stem: &str, rows: &[T], csv: bool) -> Result<PathBuf> {
        if csv {
            self.write_csv(&format!("{stem}.csv"), rows)
        } else {
            self.write_json(&format!("{stem}.json"), rows)
        }
    }

    pub fn finish(mut self) -> Result<()> {
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        let path = self.root.join(MANIFEST_NAME);
        write_atomic(&path, text.as_bytes())?;
        self.manifest.outputs.clear();
        Ok(())
    }
}
