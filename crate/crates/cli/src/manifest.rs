use std::fs;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use anyhow::{Context, Result};
use crosse::TrainConfig;
use serde::{Deserialize, Serialize};

pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "+", env!("CROSSE_GIT_DESCRIBE"));

/// Original TSV files behind a prepared data directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sources {
    pub train: PathBuf,
    pub valid: PathBuf,
    pub test: PathBuf,
}

pub const SOURCES_FILE: &str = "sources.json";

impl Sources {
    pub fn read(data: &Path) -> Option<Self> {
        let text = fs::read_to_string(data.join(SOURCES_FILE)).ok()?;
        serde_json::from_str(&text).ok()
    }
}

/// Everything needed to replay a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    /// Prepared data directory.
    pub data: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sources: Option<Sources>,
    pub config: TrainConfig,
    pub seed: u64,
    pub threads: usize,
    pub checkpoint: PathBuf,
    pub save_every: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resumed_from_epoch: Option<usize>,
    pub started: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished: Option<String>,
}

pub fn now() -> String {
    humantime::format_rfc3339_seconds(SystemTime::now()).to_string()
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}
