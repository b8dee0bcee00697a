//! Spherical-head cues: Woodworth interaural delay, a band-limited fractional
//! delay line, and the one-pole/one-zero head-shadow response.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeadModel {
    pub radius_m: f64,
    pub speed_of_sound_mps: f64,
    /// Shadow gain at high frequency for the most occluded direction.
    pub shadow_alpha_min: f64,
    /// Angle from the ear axis where the shadow is deepest.
    pub shadow_theta_min_deg: f64,
}

impl Default for HeadModel {
    fn default() -> Self {
        Self {
            radius_m: 0.0875,
            speed_of_sound_mps: 343.0,
            shadow_alpha_min: 0.1,
            shadow_theta_min_deg: 150.0,
        }
    }
}

impl HeadModel {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.radius_m > 0.0, Parameter, "head radius must be positive");
        ensure!(self.speed_of_sound_mps > 0.0, Parameter, "speed of sound must be positive");
        ensure!(
            self.shadow_alpha_min > 0.0 && self.shadow_alpha_min < 2.0,
            Parameter,
            "shadow_alpha_min {} outside (0, 2)",
            self.shadow_alpha_min
        );
        ensure!(
            self.shadow_theta_min_deg > 0.0,
            Parameter,
            "shadow_theta_min_deg must be positive"
        );
        Ok(())
    }

    /// High-frequency shadow gain for a source `theta_rel_deg` away from the ear axis.
    pub fn shadow_alpha(&self, theta_rel_deg: f64) -> f64 {
        let a = self.shadow_alpha_min;
        (1.0 + a / 2.0) + (1.0 - a / 2.0) * (PI * theta_rel_deg / self.shadow_theta_min_deg).cos()
    }
}

/// Woodworth interaural time difference in seconds; positive when the right ear leads.
pub fn itd_woodworth(azimuth_deg: f64, head: &HeadModel) -> Result<f64> {
    ensure!(
        (-90.0..=90.0).contains(&azimuth_deg),
        Precondition,
        "azimuth {azimuth_deg} outside [-90, 90]"
    );
    let t = azimuth_deg.to_radians();
    Ok(head.radius_m / head.speed_of_sound_mps * (t + t.sin()))
}

const FRAC_DELAY_HALF: isize = 16;

/// Delays `x` by `delay` samples (may be negative or fractional) with a
/// 33-tap Hann-windowed sinc interpolator. Integer delays are exact shifts.
/// The output has the input's length; samples outside the input read as zero.
pub fn fractional_delay(x: &[f32], delay: f64) -> Vec<f32> {
    let center = delay.round() as isize;
    let half_width = (FRAC_DELAY_HALF + 1) as f64;
    let taps: Vec<(isize, f64)> = (center - FRAC_DELAY_HALF..=center + FRAC_DELAY_HALF)
        .map(|k| {
            let u = k as f64 - delay;
            let sinc = if u == 0.0 {
                1.0
            } else if u.fract() == 0.0 {
                0.0
            } else {
                (PI * u).sin() / (PI * u)
            };
            let w = (PI * u / (2.0 * half_width)).cos().powi(2);
            (k, sinc * w)
        })
        .collect();
    let n = x.len() as isize;
    (0..n)
        .map(|i| {
            let mut acc = 0.0f64;
            for &(k, h) in &taps {
                let j = i - k;
                if (0..n).contains(&j) {
                    acc += h * x[j as usize] as f64;
                }
            }
            acc as f32
        })
        .collect()
}

/// Bilinear transform of H(s) = (α s + β)/(s + β), β = 2c/a.
/// Returns `(b0, b1, a1)` of `y[n] = b0 x[n] + b1 x[n-1] - a1 y[n-1]`.
pub fn shadow_iir_coefficients(alpha: f64, head: &HeadModel, sample_rate_hz: f64) -> (f64, f64, f64) {
    let beta = 2.0 * head.speed_of_sound_mps / head.radius_m;
    let k = 2.0 * sample_rate_hz;
    let norm = k + beta;
    ((alpha * k + beta) / norm, (beta - alpha * k) / norm, (beta - k) / norm)
}

pub const SHADOW_FIR_TAPS: usize = 65;
const SHADOW_GRID: usize = 512;

/// Zero-phase FIR with the magnitude response of the bilinear head-shadow
/// filter for an ear `theta_rel_deg` from the source. Tap `SHADOW_FIR_TAPS / 2`
/// is time zero.
pub fn shadow_fir(theta_rel_deg: f64, head: &HeadModel, sample_rate_hz: f64) -> Vec<f64> {
    let (b0, b1, a1) = shadow_iir_coefficients(head.shadow_alpha(theta_rel_deg), head, sample_rate_hz);
    // |H(e^jw)| sampled on the one-sided grid
    let mag: Vec<f64> = (0..=SHADOW_GRID / 2)
        .map(|k| {
            let w = 2.0 * PI * k as f64 / SHADOW_GRID as f64;
            let (c, s) = (w.cos(), w.sin());
            let num = (b0 + b1 * c).hypot(b1 * s);
            let den = (1.0 + a1 * c).hypot(a1 * s);
            num / den
        })
        .collect();
    let half = (SHADOW_FIR_TAPS / 2) as isize;
    let mut h: Vec<f64> = (-half..=half)
        .map(|n| {
            // inverse DFT of a real, even spectrum
            let mut acc = mag[0] + mag[SHADOW_GRID / 2] * (PI * n as f64).cos();
            for (k, m) in mag.iter().enumerate().take(SHADOW_GRID / 2).skip(1) {
                acc += 2.0 * m * (2.0 * PI * (k as isize * n) as f64 / SHADOW_GRID as f64).cos();
            }
            let w = (PI * n as f64 / (2.0 * (half + 1) as f64)).cos().powi(2);
            w * acc / SHADOW_GRID as f64
        })
        .collect();
    // the DC gain of the analog prototype is exactly one
    let dc: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= dc);
    h
}

/// Same-length zero-phase convolution with a centered odd-length kernel.
pub(crate) fn convolve_centered(x: &[f32], h: &[f64]) -> Vec<f32> {
    let half = (h.len() / 2) as isize;
    let n = x.len() as isize;
    (0..n)
        .map(|i| {
            let mut acc = 0.0f64;
            for (k, &hk) in h.iter().enumerate() {
                let j = i + half - k as isize;
                if (0..n).contains(&j) {
                    acc += hk * x[j as usize] as f64;
                }
            }
            acc as f32
        })
        .collect()
}
