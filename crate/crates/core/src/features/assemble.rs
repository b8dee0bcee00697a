use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::planes::{ild, ipd, magnitude, phase, Plane, ILD_EPSILON};
use super::spec::{FeatureSetSpec, PlaneLabel};
use super::stft::{stft, Channel, N_BINS};
use super::CLIP_FRAMES;
use crate::audio::{AudioClip, OPERATING_RATE_HZ};
use crate::error::{ensure, Error, Result};
use crate::synth::CLIP_SAMPLES;

const ILD_CLAMP_DB: f64 = 30.0;
const STD_FLOOR: f64 = 1e-6;

/// How a plane was scaled into the network's input range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlaneNorm {
    /// `(log10(|X| + ε) − mean) / std`, statistics from this clip and plane.
    LogZScore { mean: f64, std: f64 },
    /// Clamped to ±`clamp`, then divided by `clamp`.
    ClampScale { clamp: f64 },
    /// Divided by `divisor`.
    Scale { divisor: f64 },
}

/// Un-normalized planes in canonical order, as computed from the STFTs.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPlanes {
    pub layout: Vec<PlaneLabel>,
    pub planes: Vec<Plane>,
}

impl RawPlanes {
    pub fn get(&self, label: PlaneLabel) -> Option<&Plane> {
        self.layout.iter().position(|&l| l == label).map(|i| &self.planes[i])
    }
}

/// Network input: C planes of frames × bins, row-major, stacked in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub layout: Vec<PlaneLabel>,
    pub n_frames: usize,
    pub n_bins: usize,
    pub data: Vec<f32>,
    pub normalization: Vec<PlaneNorm>,
}

impl FeatureTensor {
    pub fn n_channels(&self) -> usize {
        self.layout.len()
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.n_frames * self.n_bins;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_by_label(&self, label: PlaneLabel) -> Option<&[f32]> {
        self.layout.iter().position(|&l| l == label).map(|c| self.plane(c))
    }
}

fn check_clip(clip: &AudioClip) -> Result<()> {
    ensure!(
        clip.sample_rate_hz() == OPERATING_RATE_HZ,
        Precondition,
        "features need {OPERATING_RATE_HZ} Hz audio, got {} Hz",
        clip.sample_rate_hz()
    );
    ensure!(
        clip.len() == CLIP_SAMPLES,
        Precondition,
        "features need {CLIP_SAMPLES}-sample clips, got {}",
        clip.len()
    );
    Ok(())
}

/// Computes the planes selected by `spec` without normalization.
pub fn raw_planes(clip: &AudioClip, spec: &FeatureSetSpec) -> Result<RawPlanes> {
    ensure!(!spec.is_empty(), Parameter, "empty feature set");
    check_clip(clip)?;
    let left = stft(clip.left(), Channel::Left)?;
    let right = stft(clip.right(), Channel::Right)?;
    let layout = spec.layout();
    let planes = layout
        .iter()
        .map(|label| match label {
            PlaneLabel::MagL => Ok(magnitude(&left)),
            PlaneLabel::MagR => Ok(magnitude(&right)),
            PlaneLabel::PhaseL => Ok(phase(&left)),
            PlaneLabel::PhaseR => Ok(phase(&right)),
            PlaneLabel::Ild => ild(&left, &right),
            PlaneLabel::Ipd => ipd(&left, &right),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RawPlanes { layout, planes })
}

fn normalize(label: PlaneLabel, plane: &Plane, out: &mut Vec<f32>) -> PlaneNorm {
    match label {
        PlaneLabel::MagL | PlaneLabel::MagR => {
            let logs: Vec<f64> = plane.data.iter().map(|m| (m + ILD_EPSILON).log10()).collect();
            let n = logs.len() as f64;
            let mean = logs.iter().sum::<f64>() / n;
            let var = logs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt().max(STD_FLOOR);
            out.extend(logs.iter().map(|v| ((v - mean) / std) as f32));
            PlaneNorm::LogZScore { mean, std }
        }
        PlaneLabel::Ild => {
            out.extend(
                plane
                    .data
                    .iter()
                    .map(|v| (v.clamp(-ILD_CLAMP_DB, ILD_CLAMP_DB) / ILD_CLAMP_DB) as f32),
            );
            PlaneNorm::ClampScale { clamp: ILD_CLAMP_DB }
        }
        PlaneLabel::PhaseL | PlaneLabel::PhaseR | PlaneLabel::Ipd => {
            out.extend(plane.data.iter().map(|v| (v / PI) as f32));
            PlaneNorm::Scale { divisor: PI }
        }
    }
}

/// Builds the C × 98 × 257 network input for a one-second 16 kHz clip.
///
/// Magnitudes are log-compressed and z-scored per clip and plane, ILD is
/// clamped to ±30 dB and scaled to [−1, 1], phases and IPD are divided by π.
pub fn assemble_features(clip: &AudioClip, spec: &FeatureSetSpec) -> Result<FeatureTensor> {
    let raw = raw_planes(clip, spec)?;
    let mut data = Vec::with_capacity(raw.layout.len() * CLIP_FRAMES * N_BINS);
    let normalization = raw
        .layout
        .iter()
        .zip(&raw.planes)
        .map(|(&label, plane)| normalize(label, plane, &mut data))
        .collect();
    if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::Validation(format!(
            "non-finite feature value in plane {}",
            raw.layout[bad / (CLIP_FRAMES * N_BINS)]
        )));
    }
    Ok(FeatureTensor {
        layout: raw.layout,
        n_frames: CLIP_FRAMES,
        n_bins: N_BINS,
        data,
        normalization,
    })
}
