use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_preset: String,
    pub seed: u64,
    pub input_paths: Vec<PathBuf>,
    pub output_dir: PathBuf,
    pub timestamp: String,
}

impl RunManifest {
    /// Creates `output_dir` and writes the manifest into it under `file_name`.
    pub fn write(&self, file_name: &str) -> anyhow::Result<PathBuf> {
        std::fs::create_dir_all(&self.output_dir)
            .with_context(|| format!("creating output directory {}", self.output_dir.display()))?;
        let path = self.output_dir.join(file_name);
        write_json(&path, self)?;
        Ok(path)
    }
}

/// `SOURCE_DATE_EPOCH` when set, the Unix epoch in toy mode, wall-clock time otherwise.
pub fn run_timestamp(toy: bool) -> String {
    let fmt = |t: chrono::DateTime<chrono::Utc>| t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    if let Some(secs) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.trim().parse::<i64>().ok()) {
        if let Some(t) = chrono::DateTime::from_timestamp(secs, 0) {
            return fmt(t);
        }
    }
    if toy {
        fmt(chrono::DateTime::UNIX_EPOCH)
    } else {
        fmt(chrono::Utc::now())
    }
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}
