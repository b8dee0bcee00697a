use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::audio::OPERATING_RATE_HZ;
use crate::error::{ensure, Error, Result};
use crate::rng;

/// Every generated source is scaled to this RMS.
pub const SOURCE_RMS: f64 = 0.1;

const CLICK_RATE_HZ: f64 = 8.0;
const CLICK_DECAY_S: f64 = 0.002;
const AM_RATE_HZ: f64 = 4.0;
const BURST_RATE_HZ: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    WhiteNoise,
    PinkNoise,
    PureTone,
    ClickTrain,
    /// White noise with a 4 Hz syllabic envelope (speech-like).
    AmNoise,
    BurstyPink,
    /// Same content as `BurstyPink`; the renderer adds a room tail.
    BurstyPinkReverb,
}

impl SourceKind {
    pub const ALL: [SourceKind; 7] = [
        SourceKind::WhiteNoise,
        SourceKind::PinkNoise,
        SourceKind::PureTone,
        SourceKind::ClickTrain,
        SourceKind::AmNoise,
        SourceKind::BurstyPink,
        SourceKind::BurstyPinkReverb,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::WhiteNoise => "white_noise",
            SourceKind::PinkNoise => "pink_noise",
            SourceKind::PureTone => "pure_tone",
            SourceKind::ClickTrain => "click_train",
            SourceKind::AmNoise => "am_noise",
            SourceKind::BurstyPink => "bursty_pink",
            SourceKind::BurstyPinkReverb => "bursty_pink_reverb",
        }
    }

    pub fn is_reverberant(self) -> bool {
        self == SourceKind::BurstyPinkReverb
    }

    /// Stationary broadband noise.
    pub fn is_broadband_noise(self) -> bool {
        matches!(self, SourceKind::WhiteNoise | SourceKind::PinkNoise)
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SourceKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown source kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub kind: SourceKind,
    pub duration_s: f64,
    /// Required for `PureTone`, ignored otherwise.
    pub tone_freq_hz: Option<f64>,
    pub seed: u64,
}

impl SourceSpec {
    pub fn new(kind: SourceKind, seed: u64) -> Self {
        Self {
            kind,
            duration_s: 1.0,
            tone_freq_hz: None,
            seed,
        }
    }

    pub fn tone(freq_hz: f64, seed: u64) -> Self {
        Self {
            tone_freq_hz: Some(freq_hz),
            ..Self::new(SourceKind::PureTone, seed)
        }
    }
}

fn white(rng: &mut rng::Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Paul Kellet's economy three-pole pinking filter.
fn pink(rng: &mut rng::Rng, n: usize) -> Vec<f64> {
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    white(rng, n)
        .into_iter()
        .map(|w| {
            b0 = 0.99765 * b0 + w * 0.0990460;
            b1 = 0.96300 * b1 + w * 0.2965164;
            b2 = 0.57000 * b2 + w * 1.0526913;
            b0 + b1 + b2 + w * 0.1848
        })
        .collect()
}

fn burst_gate(rng: &mut rng::Rng, x: &mut [f64], rate: f64) {
    let period = (rate / BURST_RATE_HZ).round() as usize;
    let offset = rng.random_range(0..period);
    for (i, v) in x.iter_mut().enumerate() {
        if (i + offset) % period >= period / 2 {
            *v = 0.0;
        }
    }
}

/// Generates a mono source signal, RMS-normalized to [`SOURCE_RMS`].
///
/// Output is a pure function of `spec`.
pub fn generate_source(spec: &SourceSpec, sample_rate_hz: u32) -> Result<Vec<f32>> {
    ensure!(
        sample_rate_hz == OPERATING_RATE_HZ,
        Parameter,
        "sources are generated at {OPERATING_RATE_HZ} Hz, not {sample_rate_hz}"
    );
    ensure!(
        spec.duration_s == 1.0,
        Parameter,
        "clip duration is fixed at 1.0 s (got {})",
        spec.duration_s
    );
    let rate = sample_rate_hz as f64;
    let n = (spec.duration_s * rate).round() as usize;
    let mut rng = rng::stream(spec.seed, &[rng::label_id(spec.kind.as_str())]);

    let mut x: Vec<f64> = match spec.kind {
        SourceKind::WhiteNoise => white(&mut rng, n),
        SourceKind::PinkNoise => pink(&mut rng, n),
        SourceKind::PureTone => {
            let f = spec
                .tone_freq_hz
                .ok_or_else(|| Error::Parameter("pure_tone requires tone_freq_hz".into()))?;
            ensure!(
                f > 20.0 && f < 7000.0,
                Parameter,
                "tone frequency {f} Hz outside (20, 7000)"
            );
            (0..n).map(|i| (2.0 * PI * f * i as f64 / rate).sin()).collect()
        }
        SourceKind::ClickTrain => {
            let period = (rate / CLICK_RATE_HZ).round() as usize;
            let offset = rng.random_range(0..period);
            let decay = CLICK_DECAY_S * rate;
            (0..n)
                .map(|i| {
                    let since = (i + period - offset) % period;
                    (-(since as f64) / decay).exp()
                })
                .collect()
        }
        SourceKind::AmNoise => {
            let phase = rng.random_range(0.0..2.0 * PI);
            let mut w = white(&mut rng, n);
            for (i, v) in w.iter_mut().enumerate() {
                let t = i as f64 / rate;
                *v *= 0.5 * (1.0 - (2.0 * PI * AM_RATE_HZ * t + phase).cos());
            }
            w
        }
        SourceKind::BurstyPink | SourceKind::BurstyPinkReverb => {
            let mut p = pink(&mut rng, n);
            burst_gate(&mut rng, &mut p, rate);
            p
        }
    };

    let rms = (x.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    ensure!(rms > 0.0, Parameter, "{} produced a silent clip", spec.kind);
    let gain = SOURCE_RMS / rms;
    x.iter_mut().for_each(|v| *v *= gain);
    Ok(x.into_iter().map(|v| v as f32).collect())
}
