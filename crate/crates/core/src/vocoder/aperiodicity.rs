use rustfft::num_complex::Complex64;

use super::{AP_BANDS, AP_BAND_EDGES, FFT_SIZE, SAMPLE_RATE};
use crate::dsp::{segment, FftPair};

const CORRELATION_LEN: usize = 480;

/// Per-band aperiodicity `1 - r`, where `r` is the normalized autocorrelation
/// of the band-passed frame at the pitch lag. Unvoiced frames are fully aperiodic.
pub fn band_aperiodicity(
    waveform: &[f64],
    center: usize,
    f0: f64,
    fft: &FftPair,
) -> [f64; AP_BANDS] {
    if f0 <= 0.0 {
        return [1.0; AP_BANDS];
    }
    let fs = SAMPLE_RATE as f64;
    let lag = fs / f0;
    let seg = segment(
        waveform,
        center as isize - (FFT_SIZE / 2) as isize,
        FFT_SIZE,
    );
    let spec = fft.spectrum(&seg);
    let bin_hz = fs / FFT_SIZE as f64;
    let mut out = [1.0; AP_BANDS];
    let mut lower = 0.0;
    for (b, &upper) in AP_BAND_EDGES.iter().enumerate() {
        let mut band: Vec<Complex64> = spec
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                let f = k.min(FFT_SIZE - k) as f64 * bin_hz;
                let inside = f >= lower && (f < upper || (b == AP_BANDS - 1 && f <= upper));
                if inside {
                    c
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        fft.inverse_in_place(&mut band);
        let y: Vec<f64> = band.iter().map(|c| c.re).collect();
        let r = [lag.floor() as usize, lag.ceil() as usize]
            .into_iter()
            .map(|l| correlation(&y, l))
            .fold(0.0f64, f64::max);
        out[b] = (1.0 - r).clamp(0.0, 1.0);
        lower = upper;
    }
    out
}

fn correlation(y: &[f64], lag: usize) -> f64 {
    let n = CORRELATION_LEN;
    let start = (y.len() - n - lag) / 2;
    let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
    for j in start..start + n {
        xy += y[j] * y[j + lag];
        xx += y[j] * y[j];
        yy += y[j + lag] * y[j + lag];
    }
    let denom = (xx * yy).sqrt();
    if denom <= 1e-20 {
        0.0
    } else {
        xy / denom
    }
}
