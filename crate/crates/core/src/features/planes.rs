use std::f64::consts::PI;

use super::stft::ComplexSpectrogram;
use crate::error::{ensure, Result};

/// Added to both magnitudes of the level ratio so silent bins stay finite.
pub const ILD_EPSILON: f64 = 1e-8;

/// A real frames × bins grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub n_frames: usize,
    pub n_bins: usize,
    pub data: Vec<f64>,
}

impl Plane {
    fn map(spec: &ComplexSpectrogram, f: impl Fn(num_complex::Complex64) -> f64) -> Self {
        Self {
            n_frames: spec.n_frames(),
            n_bins: spec.n_bins(),
            data: spec.data().iter().map(|&c| f(c)).collect(),
        }
    }

    pub fn at(&self, frame: usize, bin: usize) -> f64 {
        self.data[frame * self.n_bins + bin]
    }
}

/// Wraps an angle to (−π, π].
#[inline]
pub fn wrap_angle(x: f64) -> f64 {
    let w = x.sin().atan2(x.cos());
    if w <= -PI {
        PI
    } else {
        w
    }
}

#[inline]
fn arg(c: num_complex::Complex64) -> f64 {
    if c.re == 0.0 && c.im == 0.0 {
        0.0
    } else {
        let a = c.im.atan2(c.re);
        // −1 − 0j lands on −π; keep the positive branch
        if a <= -PI {
            PI
        } else {
            a
        }
    }
}

pub fn magnitude(spec: &ComplexSpectrogram) -> Plane {
    Plane::map(spec, |c| c.norm())
}

/// Phase in (−π, π]; zero where the coefficient is exactly zero.
pub fn phase(spec: &ComplexSpectrogram) -> Plane {
    Plane::map(spec, arg)
}

fn same_shape(left: &ComplexSpectrogram, right: &ComplexSpectrogram) -> Result<()> {
    ensure!(
        left.shape() == right.shape(),
        Precondition,
        "spectrogram shapes differ: {:?} vs {:?}",
        left.shape(),
        right.shape()
    );
    Ok(())
}

/// Interaural level difference in dB, left over right.
pub fn ild(left: &ComplexSpectrogram, right: &ComplexSpectrogram) -> Result<Plane> {
    same_shape(left, right)?;
    Ok(Plane {
        n_frames: left.n_frames(),
        n_bins: left.n_bins(),
        data: left
            .data()
            .iter()
            .zip(right.data())
            .map(|(l, r)| 20.0 * ((l.norm() + ILD_EPSILON) / (r.norm() + ILD_EPSILON)).log10())
            .collect(),
    })
}

/// Interaural phase difference, left minus right, wrapped to (−π, π].
pub fn ipd(left: &ComplexSpectrogram, right: &ComplexSpectrogram) -> Result<Plane> {
    same_shape(left, right)?;
    Ok(Plane {
        n_frames: left.n_frames(),
        n_bins: left.n_bins(),
        data: left
            .data()
            .iter()
            .zip(right.data())
            .map(|(&l, &r)| wrap_angle(arg(l) - arg(r)))
            .collect(),
    })
}
