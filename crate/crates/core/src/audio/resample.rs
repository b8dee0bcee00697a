use std::f64::consts::PI;

use super::{AudioClip, OPERATING_RATE_HZ, SOURCE_RATE_HZ};
use crate::error::{ensure, Result};

pub const DECIMATION_TAPS: usize = 63;
const CUTOFF_HZ: f64 = 7_200.0;
const FACTOR: usize = 3;

/// Linear-phase Hann-windowed sinc lowpass used before 3:1 decimation.
/// Taps are normalized to unit DC gain.
pub fn decimation_filter() -> [f64; DECIMATION_TAPS] {
    let fc = CUTOFF_HZ / SOURCE_RATE_HZ as f64;
    let mid = (DECIMATION_TAPS - 1) as f64 / 2.0;
    let mut h = [0.0; DECIMATION_TAPS];
    for (n, tap) in h.iter_mut().enumerate() {
        let t = n as f64 - mid;
        let sinc = if t == 0.0 {
            2.0 * fc
        } else {
            (2.0 * PI * fc * t).sin() / (PI * t)
        };
        // strictly positive Hann, zero just outside the filter support
        let w = (PI * (n + 1) as f64 / (DECIMATION_TAPS + 1) as f64).sin().powi(2);
        *tap = sinc * w;
    }
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|x| *x /= sum);
    h
}

fn decimate(x: &[f32], h: &[f64; DECIMATION_TAPS]) -> Vec<f32> {
    let half = (DECIMATION_TAPS / 2) as isize;
    let out_len = x.len().div_ceil(FACTOR);
    (0..out_len)
        .map(|m| {
            // centered: output sample m is aligned with input sample 3m
            let center = (m * FACTOR) as isize;
            let mut acc = 0.0f64;
            for (k, &tap) in h.iter().enumerate() {
                let idx = center + half - k as isize;
                if idx >= 0 && (idx as usize) < x.len() {
                    acc += tap * x[idx as usize] as f64;
                }
            }
            acc as f32
        })
        .collect()
}

/// Lowpass-filters a 48 kHz clip and keeps every third sample.
pub fn resample_48k_to_16k(clip: &AudioClip) -> Result<AudioClip> {
    ensure!(
        clip.sample_rate_hz() == SOURCE_RATE_HZ,
        Precondition,
        "expected a {SOURCE_RATE_HZ} Hz clip, got {} Hz",
        clip.sample_rate_hz()
    );
    let h = decimation_filter();
    AudioClip::new(
        decimate(clip.left(), &h),
        decimate(clip.right(), &h),
        OPERATING_RATE_HZ,
        clip.source_id.clone(),
    )
}
