use std::path::Path;

use rayon::prelude::*;

use super::assemble::{assemble_features, FeatureTensor};
use super::spec::{FeatureSetSpec, PlaneLabel};
use crate::audio::{read_manifest, read_wav, resample_48k_to_16k, AudioClip, ManifestRecord, OPERATING_RATE_HZ};
use crate::error::{Error, Result};

/// Feature tensors for every record of a manifest, stacked N × C × T × F,
/// with azimuth labels in radians. Order follows the manifest.
#[derive(Debug, Clone)]
pub struct LabeledSet {
    pub spec: FeatureSetSpec,
    pub layout: Vec<PlaneLabel>,
    pub n_frames: usize,
    pub n_bins: usize,
    pub data: Vec<f32>,
    pub labels_rad: Vec<f64>,
    pub records: Vec<ManifestRecord>,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.labels_rad.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels_rad.is_empty()
    }

    pub fn n_channels(&self) -> usize {
        self.layout.len()
    }

    pub fn sample_len(&self) -> usize {
        self.n_channels() * self.n_frames * self.n_bins
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let n = self.sample_len();
        &self.data[i * n..(i + 1) * n]
    }

    /// Stacks already-assembled tensors; all must share one layout and shape.
    pub fn from_tensors(
        spec: FeatureSetSpec,
        tensors: Vec<FeatureTensor>,
        labels_rad: Vec<f64>,
        records: Vec<ManifestRecord>,
    ) -> Result<Self> {
        if tensors.len() != labels_rad.len() || tensors.len() != records.len() {
            return Err(Error::Precondition("tensor, label and record counts differ".into()));
        }
        let layout = spec.layout();
        let (n_frames, n_bins) = tensors.first().map_or((0, 0), |t| (t.n_frames, t.n_bins));
        let mut data = Vec::with_capacity(tensors.len() * layout.len() * n_frames * n_bins);
        for t in &tensors {
            if t.layout != layout || t.n_frames != n_frames || t.n_bins != n_bins {
                return Err(Error::Precondition("feature tensors disagree on layout or shape".into()));
            }
            data.extend_from_slice(&t.data);
        }
        Ok(LabeledSet { spec, layout, n_frames, n_bins, data, labels_rad, records })
    }
}

/// Reads a clip referenced by a manifest, resolving relative paths against
/// the manifest's directory and bringing 48 kHz audio down to 16 kHz.
pub fn load_clip(manifest_dir: &Path, record: &ManifestRecord) -> Result<AudioClip> {
    let path = manifest_dir.join(&record.clip_path);
    let clip = read_wav(&path)?;
    if clip.sample_rate_hz() == OPERATING_RATE_HZ {
        Ok(clip)
    } else {
        resample_48k_to_16k(&clip)
    }
}

pub fn load_labeled_set(manifest: impl AsRef<Path>, spec: &FeatureSetSpec) -> Result<LabeledSet> {
    let manifest = manifest.as_ref();
    let records = read_manifest(manifest)?;
    let dir = manifest.parent().unwrap_or(Path::new("."));
    let tensors = records
        .par_iter()
        .map(|r| assemble_features(&load_clip(dir, r)?, spec))
        .collect::<Result<Vec<_>>>()?;
    let labels = records.iter().map(|r| r.azimuth_deg.to_radians()).collect();
    LabeledSet::from_tensors(*spec, tensors, labels, records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{write_manifest, write_wav, Split, WavEncoding};

    #[test]
    fn loads_in_manifest_order_and_resamples() {
        let dir = tempfile::tempdir().unwrap();
        let tone = |f: f32, n: usize, fs: f32| -> Vec<f32> {
            (0..n).map(|i| 0.1 * (2.0 * std::f32::consts::PI * f * i as f32 / fs).sin()).collect()
        };
        let a = AudioClip::from_mono(tone(440.0, 16_000, 16_000.0), 16_000, "a").unwrap();
        let b = AudioClip::from_mono(tone(440.0, 48_000, 48_000.0), 48_000, "b").unwrap();
        write_wav(dir.path().join("a.wav"), &a, WavEncoding::Float32).unwrap();
        write_wav(dir.path().join("b.wav"), &b, WavEncoding::Pcm16).unwrap();
        let rec = |p: &str, az: f64| ManifestRecord {
            clip_path: p.into(),
            azimuth_deg: az,
            source_type: "pure_tone".into(),
            split: Split::Test,
        };
        let records = vec![rec("b.wav", -30.0), rec("a.wav", 45.0)];
        let manifest = dir.path().join("m.jsonl");
        write_manifest(&records, &manifest).unwrap();

        let spec: FeatureSetSpec = "mag_lr".parse().unwrap();
        let set = load_labeled_set(&manifest, &spec).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.records, records);
        assert!((set.labels_rad[0] + 30f64.to_radians()).abs() < 1e-12);
        assert_eq!(set.sample(0).len(), 2 * 98 * 257);
    }
}
