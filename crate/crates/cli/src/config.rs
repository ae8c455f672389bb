//! Experiment configuration files.
//!
//! Grammar, one item per line:
//!
//! ```text
//! # comment
//! [section]
//! key = value
//! ```
//!
//! Blank lines and `#` comments are ignored, keys are unique within a
//! section, and every key must sit below a section header. Lists are
//! whitespace separated. Omitted keys take their defaults; unknown keys are
//! errors so typos surface immediately.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use anchordt::objective::{LossWeights, SparsityMode};
use anchordt::sparsity::StudyParams;
use anchordt::synthdata::{SynthConfig, TMode};
use anchordt::trainer::{AblationCase, TrainConfig};
use thiserror::Error;

/// Environment variable that replaces `train.seed` when set.
pub const SEED_ENV: &str = "ANCHORDT_SEED";

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("[{section}] {key}: {reason}")]
    Value {
        section: String,
        key: String,
        reason: String,
    },
    #[error("unknown key [{section}] {key}")]
    UnknownKey { section: String, key: String },
    #[error("override {0:?} must look like section.key=value")]
    BadOverride(String),
}

/// Sections of raw `key = value` strings, kept sorted so serialization is
/// canonical.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RawConfig {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::default();
        let mut current: Option<String> = None;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let syntax = |reason: &str| ConfigError::Syntax {
                line: line_no,
                reason: reason.to_string(),
            };
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| syntax("unclosed section header"))?;
                let name = name.trim();
                if name.is_empty() || name.contains(char::is_whitespace) {
                    return Err(syntax("section names are single words"));
                }
                raw.sections.entry(name.to_string()).or_default();
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| syntax("expected key = value"))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(syntax("keys are single words"));
            }
            let section = current.as_ref().ok_or_else(|| syntax("key outside any section"))?;
            let entries = raw.sections.get_mut(section).expect("section exists");
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                return Err(syntax(&format!("duplicate key {key}")));
            }
        }
        Ok(raw)
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (i, (name, entries)) in self.sections.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            out.push_str(&format!("[{name}]\n"));
            for (k, v) in entries {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    /// Copy of one section's entries (empty when absent).
    pub fn section(&self, name: &str) -> BTreeMap<String, String> {
        self.sections.get(name).cloned().unwrap_or_default()
    }

    pub fn set(&mut self, section: &str, key: &str, value: impl Into<String>) {
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), value.into());
    }

    /// Applies `section.key=value`.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), ConfigError> {
        let bad = || ConfigError::BadOverride(spec.to_string());
        let (path, value) = spec.split_once('=').ok_or_else(bad)?;
        let (section, key) = path.trim().split_once('.').ok_or_else(bad)?;
        if section.is_empty() || key.is_empty() {
            return Err(bad());
        }
        self.set(section, key, value.trim());
        Ok(())
    }

    fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.sections
            .iter()
            .flat_map(|(s, e)| e.keys().map(move |k| (s.as_str(), k.as_str())))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationSettings {
    pub cases: Vec<AblationCase>,
    pub seeds: Vec<u64>,
    /// Anchor counts for the extra sweep of the full objective; empty skips it.
    pub anchor_counts: Vec<usize>,
}

impl Default for AblationSettings {
    fn default() -> Self {
        Self {
            cases: AblationCase::ALL.to_vec(),
            seeds: vec![0, 1, 2],
            anchor_counts: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MpaSettings {
    pub samples: usize,
    pub seed: u64,
}

impl Default for MpaSettings {
    fn default() -> Self {
        Self {
            samples: 100_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensitivitySettings {
    pub anchor_seeds: Vec<u64>,
}

impl Default for SensitivitySettings {
    fn default() -> Self {
        Self {
            anchor_seeds: vec![0, 1, 2, 3, 4],
        }
    }
}

/// Everything a command can be configured with.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub data: SynthConfig,
    pub train: TrainConfig,
    pub ablation: AblationSettings,
    pub sensitivity: SensitivitySettings,
    pub probe_study: StudyParams,
    pub mpa: MpaSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: SynthConfig::default(),
            train: TrainConfig::default(),
            ablation: AblationSettings::default(),
            sensitivity: SensitivitySettings::default(),
            probe_study: StudyParams::reference(),
            mpa: MpaSettings::default(),
        }
    }
}

fn join<T: Display>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

struct Reader<'a> {
    raw: &'a RawConfig,
}

impl Reader<'_> {
    fn field<T: FromStr>(&self, section: &str, key: &str, target: &mut T) -> Result<(), ConfigError>
    where
        T::Err: Display,
    {
        if let Some(v) = self.raw.get(section, key) {
            *target = v.parse().map_err(|e: T::Err| ConfigError::Value {
                section: section.into(),
                key: key.into(),
                reason: e.to_string(),
            })?;
        }
        Ok(())
    }

    fn list<T: FromStr>(&self, section: &str, key: &str, target: &mut Vec<T>) -> Result<(), ConfigError>
    where
        T::Err: Display,
    {
        if let Some(v) = self.raw.get(section, key) {
            *target = v
                .split_whitespace()
                .map(|s| s.parse())
                .collect::<Result<_, T::Err>>()
                .map_err(|e| ConfigError::Value {
                    section: section.into(),
                    key: key.into(),
                    reason: e.to_string(),
                })?;
        }
        Ok(())
    }

    fn named<T>(
        &self,
        section: &str,
        key: &str,
        target: &mut T,
        from_name: impl Fn(&str) -> Option<T>,
    ) -> Result<(), ConfigError> {
        if let Some(v) = self.raw.get(section, key) {
            *target = from_name(v).ok_or_else(|| ConfigError::Value {
                section: section.into(),
                key: key.into(),
                reason: format!("unrecognized value {v:?}"),
            })?;
        }
        Ok(())
    }
}

struct NamedList<T>(Vec<T>);

impl FromStr for NamedList<AblationCase> {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        s.split_whitespace()
            .map(|n| AblationCase::from_name(n).ok_or_else(|| format!("unknown case {n:?}")))
            .collect::<Result<_, _>>()
            .map(NamedList)
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::from_raw(&RawConfig::parse(text)?)
    }

    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        let known = Self::default().to_raw();
        if let Some((section, key)) = raw.entries().find(|(s, k)| known.get(s, k).is_none()) {
            return Err(ConfigError::UnknownKey {
                section: section.into(),
                key: key.into(),
            });
        }
        let r = Reader { raw };
        let mut c = Self::default();

        let d = &mut c.data;
        r.field("data", "num_train", &mut d.num_train)?;
        r.field("data", "num_test", &mut d.num_test)?;
        r.field("data", "seed", &mut d.seed)?;
        let mut perm = d.permutation.to_vec();
        r.list("data", "permutation", &mut perm)?;
        d.permutation = perm.try_into().map_err(|_| ConfigError::Value {
            section: "data".into(),
            key: "permutation".into(),
            reason: "needs exactly two entries".into(),
        })?;
        r.named("data", "t_mode", &mut d.t_mode, TMode::from_name)?;
        r.field("data", "t_min", &mut d.t_range.0)?;
        r.field("data", "t_max", &mut d.t_range.1)?;

        let t = &mut c.train;
        r.field("train", "seed", &mut t.seed)?;
        r.field("train", "iterations", &mut t.iterations)?;
        r.field("train", "batch_size", &mut t.batch_size)?;
        r.field("train", "disc_steps", &mut t.disc_steps)?;
        r.field("train", "learning_rate", &mut t.adam.learning_rate)?;
        r.field("train", "beta1", &mut t.adam.beta1)?;
        r.field("train", "beta2", &mut t.adam.beta2)?;
        r.field("train", "epsilon", &mut t.adam.epsilon)?;
        let mut w: LossWeights = t.weights;
        r.field("train", "lambda_anchor", &mut w.anchor)?;
        r.field("train", "lambda_sparsity", &mut w.sparsity)?;
        r.field("train", "lambda_inv", &mut w.inv)?;
        t.weights = w;
        r.field("train", "anchor_count", &mut t.anchor_count)?;
        r.named("train", "sparsity_mode", &mut t.sparsity_mode, SparsityMode::from_name)?;
        r.field("train", "probe_mask_size", &mut t.probe.mask_size)?;
        r.field("train", "probe_delta", &mut t.probe.delta)?;
        r.field("train", "probes_per_sample", &mut t.probe.probes_per_sample)?;
        r.list("train", "generator_hidden", &mut t.generator_hidden)?;
        r.list("train", "discriminator_hidden", &mut t.discriminator_hidden)?;
        r.field("train", "diagnostic_every", &mut t.diagnostic_every)?;
        r.field("train", "diagnostic_samples", &mut t.diagnostic_samples)?;

        let mut cases = NamedList(c.ablation.cases.clone());
        r.field("ablation", "cases", &mut cases)?;
        c.ablation.cases = cases.0;
        r.list("ablation", "seeds", &mut c.ablation.seeds)?;
        r.list("ablation", "anchor_counts", &mut c.ablation.anchor_counts)?;
        r.list("sensitivity", "anchor_seeds", &mut c.sensitivity.anchor_seeds)?;

        let p = &mut c.probe_study;
        r.field("probe_study", "dim", &mut p.dim)?;
        r.field("probe_study", "row_support", &mut p.row_support)?;
        r.list("probe_study", "mask_sizes", &mut p.mask_sizes)?;
        r.field("probe_study", "num_matrices", &mut p.num_matrices)?;
        r.field("probe_study", "mc_samples", &mut p.mc_samples)?;
        r.field("probe_study", "seed", &mut p.seed)?;
        r.field("probe_study", "zero_threshold", &mut p.zero_threshold)?;

        r.field("mpa", "samples", &mut c.mpa.samples)?;
        r.field("mpa", "seed", &mut c.mpa.seed)?;
        Ok(c)
    }

    /// Every key with its current value; floats print in shortest
    /// round-trip form.
    pub fn to_raw(&self) -> RawConfig {
        let mut r = RawConfig::default();
        let d = &self.data;
        r.set("data", "num_train", d.num_train.to_string());
        r.set("data", "num_test", d.num_test.to_string());
        r.set("data", "seed", d.seed.to_string());
        r.set("data", "permutation", join(&d.permutation));
        r.set("data", "t_mode", d.t_mode.name());
        r.set("data", "t_min", d.t_range.0.to_string());
        r.set("data", "t_max", d.t_range.1.to_string());

        let t = &self.train;
        r.set("train", "seed", t.seed.to_string());
        r.set("train", "iterations", t.iterations.to_string());
        r.set("train", "batch_size", t.batch_size.to_string());
        r.set("train", "disc_steps", t.disc_steps.to_string());
        r.set("train", "learning_rate", t.adam.learning_rate.to_string());
        r.set("train", "beta1", t.adam.beta1.to_string());
        r.set("train", "beta2", t.adam.beta2.to_string());
        r.set("train", "epsilon", t.adam.epsilon.to_string());
        r.set("train", "lambda_anchor", t.weights.anchor.to_string());
        r.set("train", "lambda_sparsity", t.weights.sparsity.to_string());
        r.set("train", "lambda_inv", t.weights.inv.to_string());
        r.set("train", "anchor_count", t.anchor_count.to_string());
        r.set("train", "sparsity_mode", t.sparsity_mode.name());
        r.set("train", "probe_mask_size", t.probe.mask_size.to_string());
        r.set("train", "probe_delta", t.probe.delta.to_string());
        r.set("train", "probes_per_sample", t.probe.probes_per_sample.to_string());
        r.set("train", "generator_hidden", join(&t.generator_hidden));
        r.set("train", "discriminator_hidden", join(&t.discriminator_hidden));
        r.set("train", "diagnostic_every", t.diagnostic_every.to_string());
        r.set("train", "diagnostic_samples", t.diagnostic_samples.to_string());

        let cases: Vec<&str> = self.ablation.cases.iter().map(|c| c.name()).collect();
        r.set("ablation", "cases", cases.join(" "));
        r.set("ablation", "seeds", join(&self.ablation.seeds));
        r.set("ablation", "anchor_counts", join(&self.ablation.anchor_counts));
        r.set("sensitivity", "anchor_seeds", join(&self.sensitivity.anchor_seeds));

        let p = &self.probe_study;
        r.set("probe_study", "dim", p.dim.to_string());
        r.set("probe_study", "row_support", p.row_support.to_string());
        r.set("probe_study", "mask_sizes", join(&p.mask_sizes));
        r.set("probe_study", "num_matrices", p.num_matrices.to_string());
        r.set("probe_study", "mc_samples", p.mc_samples.to_string());
        r.set("probe_study", "seed", p.seed.to_string());
        r.set("probe_study", "zero_threshold", p.zero_threshold.to_string());

        r.set("mpa", "samples", self.mpa.samples.to_string());
        r.set("mpa", "seed", self.mpa.seed.to_string());
        r
    }

    pub fn serialize(&self) -> String {
        self.to_raw().serialize()
    }

    /// Replaces the training seed with `value` (the contents of
    /// [`SEED_ENV`]) when present.
    pub fn apply_seed_override(&mut self, value: Option<&str>) -> Result<(), ConfigError> {
        if let Some(v) = value {
            self.train.seed = v.trim().parse().map_err(|e: std::num::ParseIntError| ConfigError::Value {
                section: "env".into(),
                key: SEED_ENV.into(),
                reason: e.to_string(),
            })?;
        }
        Ok(())
    }
}
