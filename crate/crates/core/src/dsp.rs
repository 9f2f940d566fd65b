//! FFT helpers shared by the vocoder and the metrics.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Forward/inverse complex FFT pair of a fixed size.
pub struct FftPair {
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FftPair {
    pub fn new(size: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            size,
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Spectrum of a real frame, zero-padded to the FFT size (all `size` bins).
    pub fn spectrum(&self, frame: &[f64]) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.size];
        for (b, &x) in buf.iter_mut().zip(frame) {
            b.re = x;
        }
        self.forward.process(&mut buf);
        buf
    }

    /// `|X(k)|^2` for `k = 0..=size/2`.
    pub fn power(&self, frame: &[f64]) -> Vec<f64> {
        self.spectrum(frame)[..=self.size / 2]
            .iter()
            .map(Complex64::norm_sqr)
            .collect()
    }

    pub fn forward_in_place(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
    }

    /// Unnormalized inverse transform followed by `1/size` scaling.
    pub fn inverse_in_place(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
        let s = 1.0 / self.size as f64;
        buf.iter_mut().for_each(|c| *c *= s);
    }

    /// Minimum-phase spectrum whose magnitude has natural log `log_mag`
    /// (`size/2 + 1` bins), via the folded real cepstrum.
    pub fn min_phase_spectrum(&self, log_mag: &[f64]) -> Vec<Complex64> {
        let n = self.size;
        let half = n / 2;
        debug_assert_eq!(log_mag.len(), half + 1);
        let mut buf: Vec<Complex64> = (0..n)
            .map(|k| Complex64::new(log_mag[if k <= half { k } else { n - k }], 0.0))
            .collect();
        self.inverse_in_place(&mut buf);
        for (i, c) in buf.iter_mut().enumerate() {
            let w = match i {
                0 => 1.0,
                i if i < half => 2.0,
                i if i == half => 1.0,
                _ => 0.0,
            };
            *c = Complex64::new(c.re * w, 0.0);
        }
        self.forward.process(&mut buf);
        buf.iter_mut().for_each(|c| *c = c.exp());
        buf
    }

    /// Real impulse response of the minimum-phase filter with log magnitude `log_mag`.
    pub fn min_phase_response(&self, log_mag: &[f64]) -> Vec<f64> {
        let mut spec = self.min_phase_spectrum(log_mag);
        self.inverse_in_place(&mut spec);
        spec.iter().map(|c| c.re).collect()
    }
}

/// Symmetric Hann window of odd or even length.
pub fn hann(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (len - 1) as f64).cos())
        .collect()
}

/// Periodic Hann window, as used by STFT framing.
pub fn hann_periodic(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / len as f64).cos())
        .collect()
}

/// Samples `signal[start .. start + len)` with zeros outside the signal.
pub fn segment(signal: &[f64], start: isize, len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| {
            let p = start + i as isize;
            if p >= 0 && (p as usize) < signal.len() {
                signal[p as usize]
            } else {
                0.0
            }
        })
        .collect()
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}


/// Power spectrogram: Hann-windowed frames of `size` samples every `hop`
/// samples, one `size / 2 + 1`-bin row per frame. Frames are centered on
/// `t * hop` with zeros past the signal edges.
pub fn spectrogram(signal: &[f64], size: usize, hop: usize) -> Vec<Vec<f64>> {
    let fft = FftPair::new(size);
    let window = hann_periodic(size);
    let frames = signal.len().div_ceil(hop).max(1);
    (0..frames)
        .map(|t| {
            let start = (t * hop) as isize - (size / 2) as isize;
            let frame: Vec<f64> = segment(signal, start, size)
                .iter()
                .zip(&window)
                .map(|(x, w)| x * w)
                .collect();
            fft.power(&frame)
        })
        .collect()
}
