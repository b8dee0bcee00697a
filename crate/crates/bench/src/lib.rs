//! Fixtures shared by the benchmarks.

use binloc_core::features::{N_BINS, HOP, WINDOW_LEN};
use binloc_core::nn::Tensor4;
use binloc_core::synth::{generate_source, render_binaural, HeadModel, SourceKind, SourceSpec, CLIP_SAMPLES};
use binloc_core::{AudioClip, Result};

pub const SAMPLE_RATE_HZ: u32 = 16_000;

/// Frames of a one-second clip.
pub fn n_frames() -> usize {
    1 + (CLIP_SAMPLES - WINDOW_LEN) / HOP
}

/// A rendered one-second speech-like clip at 30 degrees.
pub fn clip(seed: u64) -> Result<AudioClip> {
    let source = generate_source(&SourceSpec::new(SourceKind::AmNoise, seed), SAMPLE_RATE_HZ)?;
    render_binaural(&source, 30.0, &HeadModel::default(), None)
}

/// A batch of full-size feature inputs filled with a deterministic pattern.
pub fn batch(batch: usize, channels: usize) -> Result<Tensor4<f32>> {
    Tensor4::from_fn([batch, channels, n_frames(), N_BINS], |i| ((i * 2_654_435_761) % 1000) as f32 / 500.0 - 1.0)
}
