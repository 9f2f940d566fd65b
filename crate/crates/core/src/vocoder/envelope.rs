//! Pitch-adaptive smoothed power spectrum.
//!
//! A Hann window three pitch periods long is centred on the frame, the power
//! spectrum is normalized to a per-sample power spectral density, and a
//! rectangular smoother one harmonic spacing wide removes the harmonic ripple.

use super::{FFT_SIZE, POWER_FLOOR, SAMPLE_RATE};
use crate::dsp::{hann, segment, FftPair};

/// Pitch assumed when shaping the window of an unvoiced frame.
pub const UNVOICED_F0: f64 = 300.0;

/// Smoothed power envelope (`FFT_SIZE/2 + 1` bins) around sample `center`.
pub fn spectral_envelope(waveform: &[f64], center: usize, f0: f64, fft: &FftPair) -> Vec<f64> {
    let fs = SAMPLE_RATE as f64;
    let f0 = if f0 > 0.0 { f0 } else { UNVOICED_F0 };
    let mut len = (3.0 * fs / f0).round() as usize;
    len = len.min(FFT_SIZE - 1) | 1;
    let w = hann(len);
    let start = center as isize - (len / 2) as isize;
    let frame: Vec<f64> = segment(waveform, start, len)
        .iter()
        .zip(&w)
        .map(|(x, w)| x * w)
        .collect();
    let norm: f64 = w.iter().map(|v| v * v).sum();
    let power: Vec<f64> = fft.power(&frame).iter().map(|p| p / norm).collect();
    let width = f0 * FFT_SIZE as f64 / fs;
    rectangular_smooth(&power, width)
        .into_iter()
        .map(|p| p.max(POWER_FLOOR))
        .collect()
}

/// Moving average of width `width` bins with mirrored edges at DC and Nyquist,
/// evaluated by linear interpolation of the cumulative sum.
fn rectangular_smooth(power: &[f64], width: f64) -> Vec<f64> {
    let n = power.len();
    let pad = width.ceil() as usize + 2;
    // extended[j] = power at bin (j - pad), mirrored outside [0, n - 1]
    let ext: Vec<f64> = (0..n + 2 * pad)
        .map(|j| {
            let k = j as isize - pad as isize;
            let k = if k < 0 {
                -k
            } else if k as usize >= n {
                2 * (n as isize - 1) - k
            } else {
                k
            };
            power[k as usize]
        })
        .collect();
    // cum[j] = sum of ext[..j]
    let mut cum = vec![0.0; ext.len() + 1];
    for (j, v) in ext.iter().enumerate() {
        cum[j + 1] = cum[j] + v;
    }
    let at = |x: f64| {
        let i = x.floor() as usize;
        let frac = x - i as f64;
        cum[i] + frac * (cum[i + 1] - cum[i])
    };
    (0..n)
        .map(|k| {
            // bin k covers [k - 0.5, k + 0.5) in ext coordinates shifted by pad
            let c = (k + pad) as f64 + 0.5;
            (at(c + width / 2.0) - at(c - width / 2.0)) / width
        })
        .collect()
}
