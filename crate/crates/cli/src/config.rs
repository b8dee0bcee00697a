use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use binloc_core::eval::TestSet;
use binloc_core::features::{enumerate_table1_specs, FeatureSetSpec};
use binloc_core::synth::DatasetConfig;
use binloc_core::training::TrainConfig;
use binloc_core::Split;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Fallback output root when neither the flag nor the config file sets one.
pub const OUTPUT_ROOT_ENV: &str = "BINLOC_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_ROOT: &str = "runs";

/// Everything a command needs, read from one TOML file. Unknown keys are
/// rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Worker threads; absent means one per core.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default = "DatasetConfig::desk")]
    pub synth: DatasetConfig,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub features: FeaturesSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

/// Where the manifests live. By default the dataset described by `[synth]`
/// is used, stored under the output root in a directory named after its hash.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_sets: Option<Vec<TestSet>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturesSection {
    #[serde(default = "default_spec")]
    pub spec: FeatureSetSpec,
    /// Splits to cache with `binloc features`; absent means all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splits: Option<Vec<String>>,
}

fn default_spec() -> FeatureSetSpec {
    FeatureSetSpec::new(false, false, true, true)
}

impl Default for FeaturesSection {
    fn default() -> Self {
        FeaturesSection { spec: default_spec(), splits: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "defaults::max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "defaults::patience")]
    pub patience: usize,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
}

mod defaults {
    use super::*;

    fn base() -> TrainConfig {
        TrainConfig::new(default_spec(), 0)
    }
    pub fn learning_rate() -> f64 {
        base().learning_rate
    }
    pub fn max_epochs() -> usize {
        base().max_epochs
    }
    pub fn patience() -> usize {
        base().patience
    }
    pub fn batch_size() -> usize {
        base().batch_size
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            learning_rate: defaults::learning_rate(),
            max_epochs: defaults::max_epochs(),
            patience: defaults::patience(),
            batch_size: defaults::batch_size(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    /// Defaults to the checkpoint of `binloc train` run with the same config.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Feature sets to compare; absent means all thirteen.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub specs: Option<Vec<FeatureSetSpec>>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub threads: Option<usize>,
}

/// Manifests a command reads.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifests {
    pub train: PathBuf,
    pub val: PathBuf,
    pub test_sets: Vec<TestSet>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| one_line_error(text, &e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.train_config(self.features.spec).validate()?;
        if self.threads == Some(0) {
            bail!("threads must be at least 1");
        }
        if let Some(specs) = &self.sweep.specs {
            binloc_core::eval::canonical_order(specs)?;
        }
        Ok(())
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = &o.output_dir {
            self.output_dir = Some(d.clone());
        }
        if let Some(t) = o.threads {
            self.threads = Some(t);
        }
        self.validate()
    }

    /// Flag, then file, then the environment, then `runs`.
    pub fn output_root(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
    }

    /// The config with the output root filled in, as persisted next to outputs.
    pub fn resolved(&self) -> RunConfig {
        RunConfig { output_dir: Some(self.output_root()), ..self.clone() }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("serializing config")
    }

    /// Identifies a run by the config that determines its outputs. Where
    /// outputs go and how many threads compute them do not change them, so
    /// they are left out.
    pub fn run_id(&self, command: &str) -> Result<String> {
        let identity = RunConfig { output_dir: None, threads: None, ..self.clone() };
        Ok(short_hash(&format!("{command}\n{}", identity.to_toml()?)))
    }

    pub fn run_dir(&self, command: &str) -> Result<PathBuf> {
        Ok(self.output_root().join(format!("{command}-{}", self.run_id(command)?)))
    }

    /// Dataset directory: `[data] dir`, or one named after the `[synth]` hash.
    pub fn dataset_dir(&self) -> Result<PathBuf> {
        match &self.data.dir {
            Some(d) => Ok(d.clone()),
            None => {
                let synth = toml::to_string(&self.synth).context("serializing synth config")?;
                Ok(self.output_root().join(format!("data-{}", short_hash(&synth))))
            }
        }
    }

    /// Resolves train/val/test manifests; splits not set in `[data]` come
    /// from the `[synth]` split list.
    pub fn manifests(&self) -> Result<Manifests> {
        let dir = self.dataset_dir()?;
        let first = |kind: Split| -> Result<PathBuf> {
            let s = self
                .synth
                .splits
                .iter()
                .find(|s| s.split == kind)
                .with_context(|| format!("no {} split in [synth] and none set in [data]", kind))?;
            Ok(dir.join(format!("{}.jsonl", s.name)))
        };
        let train = match &self.data.train {
            Some(p) => p.clone(),
            None => first(Split::Train)?,
        };
        let val = match &self.data.val {
            Some(p) => p.clone(),
            None => first(Split::Val)?,
        };
        let test_sets = match &self.data.test_sets {
            Some(t) => t.clone(),
            None => self
                .synth
                .splits
                .iter()
                .filter(|s| s.split == Split::Test)
                .map(|s| TestSet { name: s.name.clone(), manifest: dir.join(format!("{}.jsonl", s.name)) })
                .collect(),
        };
        if test_sets.is_empty() {
            bail!("no test sets configured");
        }
        Ok(Manifests { train, val, test_sets })
    }

    /// Whether the manifests come from `[synth]` (and may be generated).
    pub fn uses_synth_dataset(&self) -> bool {
        self.data.train.is_none() || self.data.val.is_none() || self.data.test_sets.is_none()
    }

    pub fn train_config(&self, spec: FeatureSetSpec) -> TrainConfig {
        TrainConfig {
            learning_rate: self.train.learning_rate,
            max_epochs: self.train.max_epochs,
            patience: self.train.patience,
            batch_size: self.train.batch_size,
            seed: self.seed,
            feature_spec: spec,
        }
    }

    pub fn sweep_specs(&self) -> Vec<FeatureSetSpec> {
        self.sweep.specs.clone().unwrap_or_else(enumerate_table1_specs)
    }
}

/// `line L, column C: message`, without the source excerpt toml adds.
fn one_line_error(text: &str, e: &toml::de::Error) -> anyhow::Error {
    let message = e.message().trim_end().replace('\n', " ");
    match e.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            anyhow::anyhow!("line {line}, column {column}: {message}")
        }
        None => anyhow::anyhow!("{message}"),
    }
}

/// First 16 hex digits of SHA-256.
pub fn short_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes())[..8].iter().map(|b| format!("{b:02x}")).collect()
}
