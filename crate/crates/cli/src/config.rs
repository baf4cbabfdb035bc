//! Run configuration: a single JSON document, merged with command-line flags.
//!
//! Relative paths inside a config file are resolved against the file's
//! directory; paths given as flags are taken as they are.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vcat_core::data::OutcomeRule;
use vcat_core::experiments::{GeneratorConfig, SimSpec};
use vcat_core::generators::GeneratorKind;

pub const DEFAULT_K: usize = 1000;
pub const DEFAULT_L: usize = 999;
pub const DEFAULT_IMPUTE_ITERATIONS: usize = 10;
pub const SEED_ENV: &str = "VCAT_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeriveOutcome {
    pub col_a: String,
    pub col_b: String,
    pub outcome: String,
    pub rule: OutcomeRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImputeConfig {
    pub iterations: usize,
}

/// Applied in field order: outcome derivation, recoding, imputation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preprocess {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derive_outcome: Option<DeriveOutcome>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub recode: BTreeMap<String, BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub impute: Option<ImputeConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<PathBuf>,
    /// Simulated trial used instead of `data`/`schema`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimSpec>,
    #[serde(default)]
    pub preprocess: Preprocess,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Synthetic CSV compared against the data by `score`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<PathBuf>,
}

/// Values given on the command line; each overrides the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub synthetic: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub l: Option<usize>,
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| format!("invalid config {}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut cfg.data);
        resolve(base, &mut cfg.schema);
        resolve(base, &mut cfg.synthetic);
        resolve(base, &mut cfg.output);
        if let Some(GeneratorConfig {
            kind: GeneratorKind::External(ext),
            ..
        }) = &mut cfg.generator
        {
            if ext.executable.is_relative() && ext.executable.components().count() > 1 {
                ext.executable = base.join(&ext.executable);
            }
            resolve(base, &mut ext.work_root);
        }
        Ok(cfg)
    }

    /// Applies flags, then fills the seed from `env_seed` and the remaining
    /// defaults.
    pub fn merge(mut self, o: Overrides, env_seed: Option<u64>) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if o.$f.is_some() { self.$f = o.$f; } )* };
        }
        take!(data, schema, synthetic, output, seed, n, k, l);
        self.seed = self.seed.or(env_seed).or(Some(0));
        self.k = self.k.or(Some(DEFAULT_K));
        self.l = self.l.or(Some(DEFAULT_L));
        if self.generator.is_none() {
            self.generator = Some(GeneratorConfig::new(GeneratorKind::Bootstrap));
        }
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

pub fn env_seed() -> Result<Option<u64>, String> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| format!("{SEED_ENV}={v} is not an unsigned 64-bit integer")),
        Err(_) => Ok(None),
    }
}
