use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub flags: Value,
    pub config_hash: Option<String>,
    pub version: String,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(subcommand: &str, flags: &impl Serialize, config_hash: Option<String>) -> Result<Self> {
        Ok(Self {
            subcommand: subcommand.to_string(),
            flags: serde_json::to_value(flags)?,
            config_hash,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        })
    }

    /// Writes `<stem>.manifest.json` beside `primary_output`.
    pub fn write_beside(&self, primary_output: &Path) -> Result<PathBuf> {
        let path = sidecar(primary_output, "manifest.json");
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// `dir/stem.ext` for `dir/stem.whatever`.
pub fn sidecar(primary: &Path, ext: &str) -> PathBuf {
    let stem = primary
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "output".to_string());
    primary.with_file_name(format!("{stem}.{ext}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_names() {
        assert_eq!(
            sidecar(Path::new("out/clusters.jsonl"), "summary.json"),
            PathBuf::from("out/clusters.summary.json")
        );
        assert_eq!(
            sidecar(Path::new("stats.json"), "manifest.json"),
            PathBuf::from("stats.manifest.json")
        );
    }

    #[test]
    fn manifest_records_flags() {
        let m = RunManifest::new("stats", &serde_json::json!({"out": "x.json"}), None).unwrap();
        assert_eq!(m.flags["out"], "x.json");
        assert!(m.timestamp.ends_with('Z'));
    }
}
