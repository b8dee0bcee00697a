//! Audio clips, WAV files, 48 kHz → 16 kHz decimation and dataset manifests.

mod azimuth;
mod manifest;
mod resample;
mod wav;

pub use azimuth::{frontal_to_full_circle, wrap_azimuth_to_frontal};
pub use manifest::{read_manifest, validate_record, write_manifest, ManifestRecord, Split};
pub use resample::{decimation_filter, resample_48k_to_16k, DECIMATION_TAPS};
pub use wav::{read_wav, write_wav, WavEncoding};

use crate::error::{ensure, Result};

/// The rate every downstream stage assumes.
pub const OPERATING_RATE_HZ: u32 = 16_000;
pub const SOURCE_RATE_HZ: u32 = 48_000;

/// A stereo clip. Left and right always hold the same number of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    left: Vec<f32>,
    right: Vec<f32>,
    sample_rate_hz: u32,
    pub source_id: String,
}

impl AudioClip {
    pub fn new(
        left: Vec<f32>,
        right: Vec<f32>,
        sample_rate_hz: u32,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        ensure!(
            left.len() == right.len(),
            Precondition,
            "channel length mismatch: left {} vs right {}",
            left.len(),
            right.len()
        );
        ensure!(sample_rate_hz > 0, Precondition, "sample rate must be positive");
        Ok(Self {
            left,
            right,
            sample_rate_hz,
            source_id: source_id.into(),
        })
    }

    /// Same signal in both ears.
    pub fn from_mono(samples: Vec<f32>, sample_rate_hz: u32, source_id: impl Into<String>) -> Result<Self> {
        Self::new(samples.clone(), samples, sample_rate_hz, source_id)
    }

    pub fn left(&self) -> &[f32] {
        &self.left
    }

    pub fn right(&self) -> &[f32] {
        &self.right
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz as f64
    }

    /// Left and right exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            left: self.right.clone(),
            right: self.left.clone(),
            sample_rate_hz: self.sample_rate_hz,
            source_id: self.source_id.clone(),
        }
    }

    /// Both channels multiplied by `gain`.
    pub fn scaled(&self, gain: f32) -> Self {
        Self {
            left: self.left.iter().map(|x| x * gain).collect(),
            right: self.right.iter().map(|x| x * gain).collect(),
            sample_rate_hz: self.sample_rate_hz,
            source_id: self.source_id.clone(),
        }
    }

    pub fn peak(&self) -> f32 {
        self.left
            .iter()
            .chain(&self.right)
            .fold(0.0f32, |m, x| m.max(x.abs()))
    }

    pub fn into_channels(self) -> (Vec<f32>, Vec<f32>) {
        (self.left, self.right)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unequal_channels() {
        assert!(AudioClip::new(vec![0.0; 3], vec![0.0; 4], 16_000, "x").is_err());
    }

    #[test]
    fn swap_exchanges_channels() {
        let c = AudioClip::new(vec![1.0, 2.0], vec![3.0, 4.0], 16_000, "x").unwrap();
        let s = c.swapped();
        assert_eq!(s.left(), &[3.0, 4.0]);
        assert_eq!(s.right(), &[1.0, 2.0]);
    }
}
