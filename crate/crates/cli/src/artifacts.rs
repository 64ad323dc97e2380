use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{sha256_hex, ExperimentConfig};
use crate::error::CliResult;

pub const MANIFEST: &str = "manifest.json";
pub const RESOLVED_CONFIG: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    experiment: &'a str,
    config_hash: &'a str,
    seeds: &'a [u64],
    artifacts: Vec<ArtifactEntry>,
}

/// Output directory of one run. Every file written through it is hashed
/// into the manifest.
pub struct OutputDir {
    root: PathBuf,
    config_hash: String,
    artifacts: Vec<ArtifactEntry>,
}

impl OutputDir {
    /// Creates the directory and echoes the resolved configuration into it.
    pub fn create(cfg: &ExperimentConfig) -> CliResult<Self> {
        std::fs::create_dir_all(&cfg.output_dir)?;
        let mut out = Self { root: cfg.output_dir.clone(), config_hash: cfg.hash()?, artifacts: Vec::new() };
        out.write_bytes(RESOLVED_CONFIG, cfg.to_toml()?.as_bytes())?;
        Ok(out)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn write_bytes(&mut self, rel: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, bytes)?;
        self.artifacts.push(ArtifactEntry { path: rel.to_string(), sha256: sha256_hex(bytes) });
        Ok(path)
    }

    /// CSV with a leading `# config_hash: <hex>` line.
    pub fn write_csv(&mut self, rel: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<PathBuf> {
        let mut buf = format!("# config_hash: {}\n", self.config_hash).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(header)?;
            for r in rows {
                w.write_record(r)?;
            }
            w.flush()?;
        }
        self.write_bytes(rel, &buf)
    }

    /// JSON document `{"config_hash": ..., "content": value}`.
    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> CliResult<PathBuf> {
        #[derive(Serialize)]
        struct Wrapped<'a, T> {
            config_hash: &'a str,
            content: &'a T,
        }
        let text = serde_json::to_string_pretty(&Wrapped { config_hash: &self.config_hash, content: value })?;
        self.write_bytes(rel, text.as_bytes())
    }

    /// Records a file that was written by other code.
    pub fn register(&mut self, rel: &str) -> CliResult<()> {
        let bytes = std::fs::read(self.root.join(rel))?;
        self.artifacts.push(ArtifactEntry { path: rel.to_string(), sha256: sha256_hex(&bytes) });
        Ok(())
    }

    /// Writes the manifest and returns the artifact list.
    pub fn finish(mut self, cfg: &ExperimentConfig) -> CliResult<Vec<ArtifactEntry>> {
        self.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            experiment: cfg.experiment.name(),
            config_hash: &self.config_hash,
            seeds: &cfg.seeds,
            artifacts: self.artifacts.clone(),
        };
        std::fs::write(self.root.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
        Ok(self.artifacts)
    }
}

/// Shortest round-trip decimal form.
pub fn num(x: f64) -> String {
    format!("{x}")
}
