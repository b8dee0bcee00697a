//! Labeled dataset synthesis: every (split, kind, seed, azimuth) cell of a
//! config becomes one rendered clip plus one manifest record.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::head::HeadModel;
use super::render::render_binaural;
use super::source::{generate_source, SourceKind, SourceSpec};
use crate::audio::{write_manifest, write_wav, AudioClip, ManifestRecord, Split, WavEncoding, OPERATING_RATE_HZ};
use crate::error::{ensure, Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AzimuthGrid {
    pub start_deg: f64,
    pub stop_deg: f64,
    pub step_deg: f64,
}

impl Default for AzimuthGrid {
    fn default() -> Self {
        Self {
            start_deg: -90.0,
            stop_deg: 90.0,
            step_deg: 5.0,
        }
    }
}

impl AzimuthGrid {
    /// Inclusive of both ends when `stop` lies on the grid.
    pub fn angles(&self) -> Result<Vec<f64>> {
        ensure!(self.step_deg > 0.0, Config, "azimuth step must be positive");
        ensure!(
            -90.0 <= self.start_deg && self.start_deg <= self.stop_deg && self.stop_deg <= 90.0,
            Config,
            "azimuth grid [{}, {}] must lie within [-90, 90]",
            self.start_deg,
            self.stop_deg
        );
        let n = ((self.stop_deg - self.start_deg) / self.step_deg + 1e-9).floor() as usize + 1;
        Ok((0..n).map(|i| self.start_deg + i as f64 * self.step_deg).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    /// Manifest and directory name, e.g. `train` or `test_out`.
    pub name: String,
    pub split: Split,
    pub kinds: Vec<SourceKind>,
    pub seeds: Vec<u64>,
    /// Out-of-domain test sets may not share any source kind with training.
    #[serde(default)]
    pub out_of_domain: bool,
    /// Overrides the dataset-wide azimuth grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub azimuths_deg: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default)]
    pub head: HeadModel,
    #[serde(default)]
    pub azimuths: AzimuthGrid,
    /// Pure-tone frequencies are drawn log-uniformly from this range.
    #[serde(default = "default_tone_range")]
    pub tone_freq_range_hz: [f64; 2],
    pub splits: Vec<SplitSpec>,
}

fn default_tone_range() -> [f64; 2] {
    [200.0, 4000.0]
}

impl DatasetConfig {
    /// Desk-scale layout: speech-like training material at 37 angles, an
    /// in-domain test set of the same kinds, and an out-of-domain test set of
    /// noise, tones, clicks and reverberant bursts.
    pub fn desk() -> Self {
        let speech_like = vec![SourceKind::AmNoise, SourceKind::BurstyPink];
        let split = |name: &str, split, kinds: Vec<SourceKind>, seeds: Vec<u64>, ood| SplitSpec {
            name: name.into(),
            split,
            kinds,
            seeds,
            out_of_domain: ood,
            azimuths_deg: None,
        };
        Self {
            head: HeadModel::default(),
            azimuths: AzimuthGrid::default(),
            tone_freq_range_hz: default_tone_range(),
            splits: vec![
                split("train", Split::Train, speech_like.clone(), vec![1, 2, 3, 4], false),
                split("val", Split::Val, speech_like.clone(), vec![5], false),
                split("test_in", Split::Test, speech_like, vec![6, 7], false),
                split(
                    "test_out",
                    Split::Test,
                    vec![
                        SourceKind::WhiteNoise,
                        SourceKind::PinkNoise,
                        SourceKind::PureTone,
                        SourceKind::ClickTrain,
                        SourceKind::BurstyPinkReverb,
                    ],
                    vec![8, 9],
                    true,
                ),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.head.validate().map_err(|e| Error::Config(e.to_string()))?;
        let [lo, hi] = self.tone_freq_range_hz;
        ensure!(
            20.0 < lo && lo <= hi && hi < 7000.0,
            Config,
            "tone_freq_range_hz [{lo}, {hi}] must lie within (20, 7000)"
        );
        ensure!(!self.splits.is_empty(), Config, "no splits configured");
        let mut names = BTreeSet::new();
        let mut seed_owner: BTreeMap<u64, &str> = BTreeMap::new();
        for s in &self.splits {
            ensure!(
                !s.name.is_empty() && s.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-'),
                Config,
                "split name {:?} must be a non-empty [A-Za-z0-9_-] identifier",
                s.name
            );
            ensure!(names.insert(s.name.as_str()), Config, "duplicate split name {:?}", s.name);
            ensure!(!s.kinds.is_empty(), Config, "split {:?} has no source kinds", s.name);
            ensure!(!s.seeds.is_empty(), Config, "split {:?} has no seeds", s.name);
            for &seed in &s.seeds {
                if let Some(other) = seed_owner.insert(seed, &s.name) {
                    if other != s.name {
                        return Err(Error::Config(format!(
                            "seed {seed} used by both {other:?} and {:?}; split seeds must be disjoint",
                            s.name
                        )));
                    }
                }
            }
            for az in self.split_angles(s)? {
                ensure!((-90.0..=90.0).contains(&az), Config, "azimuth {az} outside [-90, 90]");
            }
        }
        let train_kinds: BTreeSet<SourceKind> = self
            .splits
            .iter()
            .filter(|s| s.split == Split::Train)
            .flat_map(|s| s.kinds.iter().copied())
            .collect();
        for s in self.splits.iter().filter(|s| s.out_of_domain) {
            ensure!(s.split == Split::Test, Config, "only test splits can be out-of-domain ({:?})", s.name);
            if let Some(k) = s.kinds.iter().find(|k| train_kinds.contains(k)) {
                return Err(Error::Config(format!(
                    "out-of-domain split {:?} uses training kind {k}",
                    s.name
                )));
            }
        }
        Ok(())
    }

    fn split_angles(&self, s: &SplitSpec) -> Result<Vec<f64>> {
        match &s.azimuths_deg {
            Some(v) => Ok(v.clone()),
            None => self.azimuths.angles(),
        }
    }
}

/// One clip to render, in manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipJob {
    pub split_name: String,
    pub split: Split,
    pub kind: SourceKind,
    pub seed: u64,
    pub azimuth_index: usize,
    pub azimuth_deg: f64,
    /// Relative to the dataset root.
    pub rel_path: String,
}

impl ClipJob {
    fn source_seed(&self) -> u64 {
        rng::derive_seed(self.seed, &[rng::label_id(self.kind.as_str()), self.azimuth_index as u64])
    }

    pub fn source_spec(&self, tone_range: [f64; 2]) -> SourceSpec {
        let seed = self.source_seed();
        let tone_freq_hz = (self.kind == SourceKind::PureTone).then(|| {
            let mut r = rng::stream(seed, &[rng::label_id("tone")]);
            let (lo, hi) = (tone_range[0].ln(), tone_range[1].ln());
            if hi > lo {
                r.random_range(lo..hi).exp()
            } else {
                tone_range[0]
            }
        });
        SourceSpec {
            tone_freq_hz,
            ..SourceSpec::new(self.kind, seed)
        }
    }

    pub fn render(&self, config: &DatasetConfig) -> Result<AudioClip> {
        let spec = self.source_spec(config.tone_freq_range_hz);
        let source = generate_source(&spec, OPERATING_RATE_HZ)?;
        let reverb = self.kind.is_reverberant().then(|| rng::derive_seed(spec.seed, &[rng::label_id("room")]));
        let mut clip = render_binaural(&source, self.azimuth_deg, &config.head, reverb)?;
        clip.source_id = self.kind.as_str().to_string();
        Ok(clip)
    }

    pub fn record(&self) -> ManifestRecord {
        ManifestRecord {
            clip_path: self.rel_path.clone(),
            azimuth_deg: self.azimuth_deg,
            source_type: self.kind.as_str().into(),
            split: self.split,
        }
    }
}

/// Enumerates every clip of a config: splits in order, then kinds, seeds, azimuths.
pub fn plan_dataset(config: &DatasetConfig) -> Result<Vec<ClipJob>> {
    config.validate()?;
    let mut jobs = Vec::new();
    for s in &config.splits {
        let angles = config.split_angles(s)?;
        for &kind in &s.kinds {
            for &seed in &s.seeds {
                for (azimuth_index, &az) in angles.iter().enumerate() {
                    jobs.push(ClipJob {
                        split_name: s.name.clone(),
                        split: s.split,
                        kind,
                        seed,
                        azimuth_index,
                        azimuth_deg: az,
                        rel_path: format!("{}/{}_s{}_az{:+06.1}.wav", s.name, kind, seed, az),
                    });
                }
            }
        }
    }
    Ok(jobs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitSummary {
    pub name: String,
    pub split: Split,
    pub manifest: PathBuf,
    pub records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub root: PathBuf,
    pub splits: Vec<SplitSummary>,
}

impl DatasetSummary {
    pub fn manifest(&self, name: &str) -> Option<&Path> {
        self.splits.iter().find(|s| s.name == name).map(|s| s.manifest.as_path())
    }

    pub fn total_records(&self) -> usize {
        self.splits.iter().map(|s| s.records).sum()
    }
}

/// Renders every clip of `config` under `root` and writes one `<split>.jsonl`
/// manifest per split. Clips render in parallel on the current rayon pool;
/// files and manifests do not depend on the thread count.
pub fn build_dataset(config: &DatasetConfig, root: impl AsRef<Path>) -> Result<DatasetSummary> {
    let root = root.as_ref();
    let jobs = plan_dataset(config)?;
    for s in &config.splits {
        let dir = root.join(&s.name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    jobs.par_iter().try_for_each(|job| -> Result<()> {
        let clip = job.render(config)?;
        write_wav(root.join(&job.rel_path), &clip, WavEncoding::Float32)
    })?;

    let mut splits = Vec::new();
    for s in &config.splits {
        let records: Vec<ManifestRecord> = jobs
            .iter()
            .filter(|j| j.split_name == s.name)
            .map(ClipJob::record)
            .collect();
        let manifest = root.join(format!("{}.jsonl", s.name));
        write_manifest(&records, &manifest)?;
        splits.push(SplitSummary {
            name: s.name.clone(),
            split: s.split,
            manifest,
            records: records.len(),
        });
    }
    Ok(DatasetSummary {
        root: root.to_path_buf(),
        splits,
    })
}
