//! Run manifests: what was run, with which inputs, and the SHA-256 of every
//! deterministic output, so a run can be replayed and compared byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};

use crate::config::RawConfig;

pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunManifest {
    pub command: String,
    /// Resolved configuration the run used, if the command takes one.
    pub config_file: Option<String>,
    pub out_dir: String,
    pub seed: Option<u64>,
    /// Named input paths and flags needed to rerun the command.
    pub inputs: BTreeMap<String, String>,
    /// Output file name (relative to `out_dir`) to SHA-256 hex digest.
    pub artifacts: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    /// Hashes each named artifact inside `out_dir`.
    pub fn record_artifacts(&mut self, out_dir: &Path, names: &[String]) -> Result<()> {
        for name in names {
            self.artifacts.insert(name.clone(), sha256_file(&out_dir.join(name))?);
        }
        Ok(())
    }

    pub fn serialize(&self) -> String {
        let mut raw = RawConfig::default();
        raw.set("run", "command", self.command.as_str());
        raw.set("run", "out_dir", self.out_dir.as_str());
        if let Some(c) = &self.config_file {
            raw.set("run", "config", c.as_str());
        }
        if let Some(s) = self.seed {
            raw.set("run", "seed", s.to_string());
        }
        for (k, v) in &self.inputs {
            raw.set("inputs", k, v.as_str());
        }
        for (k, v) in &self.artifacts {
            raw.set("artifacts", k, v.as_str());
        }
        raw.serialize()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw = RawConfig::parse(text)?;
        let command = raw.get("run", "command").context("manifest lacks [run] command")?;
        let out_dir = raw.get("run", "out_dir").context("manifest lacks [run] out_dir")?;
        let seed = raw
            .get("run", "seed")
            .map(|s| s.parse::<u64>())
            .transpose()
            .context("manifest seed")?;
        let mut m = RunManifest {
            command: command.to_string(),
            config_file: raw.get("run", "config").map(str::to_string),
            out_dir: out_dir.to_string(),
            seed,
            ..Default::default()
        };
        m.inputs = raw.section("inputs");
        m.artifacts = raw.section("artifacts");
        Ok(m)
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        fs::write(out_dir.join(MANIFEST_FILE), self.serialize())
            .with_context(|| format!("writing manifest in {}", out_dir.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArtifactComparison {
    pub name: String,
    pub expected: String,
    pub actual: Option<String>,
}

impl ArtifactComparison {
    pub fn matches(&self) -> bool {
        self.actual.as_deref() == Some(self.expected.as_str())
    }
}

/// Compares the digests recorded in `original` with the files in `out_dir`.
pub fn compare_artifacts(original: &RunManifest, out_dir: &Path) -> Vec<ArtifactComparison> {
    original
        .artifacts
        .iter()
        .map(|(name, expected)| ArtifactComparison {
            name: name.clone(),
            expected: expected.clone(),
            actual: sha256_file(&out_dir.join(name)).ok(),
        })
        .collect()
}

pub fn ensure_all_match(comparisons: &[ArtifactComparison]) -> Result<()> {
    let bad: Vec<&str> = comparisons
        .iter()
        .filter(|c| !c.matches())
        .map(|c| c.name.as_str())
        .collect();
    if !bad.is_empty() {
        bail!("replay differs in {}", bad.join(", "));
    }
    Ok(())
}
