use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;

/// What a command produced. Printed to stdout rather than written under the
/// output directory, so the files there stay byte-identical across runs.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub output: PathBuf,
    pub config: Option<PathBuf>,
    pub artifacts: Vec<PathBuf>,
    /// Seconds since the epoch; `SOURCE_DATE_EPOCH` wins when set.
    pub timestamp: u64,
}

fn now() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or_else(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs())
        })
}

impl Manifest {
    pub fn new(
        command: &'static str,
        output: &Path,
        config: Option<PathBuf>,
        artifacts: Vec<PathBuf>,
    ) -> Self {
        Self {
            tool: crate::TOOL,
            version: crate::VERSION,
            command,
            output: output.to_path_buf(),
            config,
            artifacts,
            timestamp: now(),
        }
    }

    pub fn emit(&self, path: Option<&Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        if let Some(path) = path {
            std::fs::write(path, format!("{text}\n"))
                .with_context(|| format!("writing manifest {}", path.display()))?;
        }
        println!("{text}");
        Ok(())
    }
}
