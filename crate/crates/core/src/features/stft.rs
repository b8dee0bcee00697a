use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{ensure, Result};

/// 25 ms at 16 kHz.
pub const WINDOW_LEN: usize = 400;
/// 10 ms at 16 kHz.
pub const HOP: usize = 160;
pub const FFT_LEN: usize = 512;
pub const N_BINS: usize = FFT_LEN / 2 + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Left,
    Right,
}

/// One-sided STFT of one channel, frames × bins, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub channel: Channel,
    n_frames: usize,
    n_bins: usize,
    data: Vec<Complex64>,
}

impl ComplexSpectrogram {
    /// Wraps precomputed coefficients (frames × bins, row-major).
    pub fn from_raw(channel: Channel, n_frames: usize, n_bins: usize, data: Vec<Complex64>) -> Result<Self> {
        ensure!(
            data.len() == n_frames * n_bins,
            Precondition,
            "{} coefficients for a {n_frames}x{n_bins} grid",
            data.len()
        );
        Ok(Self {
            channel,
            n_frames,
            n_bins,
            data,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn window_len(&self) -> usize {
        WINDOW_LEN
    }

    pub fn hop(&self) -> usize {
        HOP
    }

    pub fn fft_len(&self) -> usize {
        FFT_LEN
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn at(&self, frame: usize, bin: usize) -> Complex64 {
        self.data[frame * self.n_bins + bin]
    }

    pub fn frame(&self, frame: usize) -> &[Complex64] {
        &self.data[frame * self.n_bins..(frame + 1) * self.n_bins]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_frames, self.n_bins)
    }
}

/// Periodic Hann window.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// Short-time Fourier transform: 400-sample Hann frames every 160 samples,
/// zero-padded to 512. Phase is referenced to each frame's first sample.
pub fn stft(samples: &[f32], channel: Channel) -> Result<ComplexSpectrogram> {
    ensure!(
        samples.len() >= WINDOW_LEN,
        Precondition,
        "STFT needs at least {WINDOW_LEN} samples, got {}",
        samples.len()
    );
    let n_frames = 1 + (samples.len() - WINDOW_LEN) / HOP;
    let window = hann_window(WINDOW_LEN);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(FFT_LEN);
    let mut buf = vec![Complex64::new(0.0, 0.0); FFT_LEN];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut data = Vec::with_capacity(n_frames * N_BINS);
    for t in 0..n_frames {
        let frame = &samples[t * HOP..t * HOP + WINDOW_LEN];
        for (b, (&x, &w)) in buf.iter_mut().zip(frame.iter().zip(&window)) {
            *b = Complex64::new(x as f64 * w, 0.0);
        }
        buf[WINDOW_LEN..].fill(Complex64::new(0.0, 0.0));
        fft.process_with_scratch(&mut buf, &mut scratch);
        data.extend_from_slice(&buf[..N_BINS]);
    }
    Ok(ComplexSpectrogram {
        channel,
        n_frames,
        n_bins: N_BINS,
        data,
    })
}
