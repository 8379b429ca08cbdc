//! Run-directory manifest: every artifact a command produced, keyed by
//! path, with the digest of the config that produced it. Rewritten
//! idempotently so reruns stay byte-identical.

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use std::fs;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Artifact {
    pub path: String,
    pub kind: String,
    pub config_digest: String,
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub artifacts: Vec<Artifact>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Manifest> {
        let path = dir.join("manifest.json");
        if !path.exists() {
            return Ok(Manifest::default());
        }
        let text = fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn record(&mut self, path: &str, kind: &str, config_digest: &str) {
        self.artifacts.retain(|a| a.path != path);
        self.artifacts.push(Artifact {
            path: path.to_string(),
            kind: kind.to_string(),
            config_digest: config_digest.to_string(),
        });
        self.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).context("serializing manifest")?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}
