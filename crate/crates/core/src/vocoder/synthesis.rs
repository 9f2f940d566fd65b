//! Pulse/noise excitation filtered by minimum-phase responses of the decoded
//! envelope, overlap-added pitch-synchronously.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;

use super::mcep::McepDecoder;
use super::{
    FeatureSet, VocoderConfig, AP_BANDS, AP_BAND_EDGES, FFT_SIZE, HOP, POWER_FLOOR, SAMPLE_RATE,
};
use crate::dsp::FftPair;
use crate::error::Result;

/// Smallest pulse or noise share of a band; keeps the log finite.
const WEIGHT_FLOOR: f64 = 1e-12;

pub fn synthesize(features: &FeatureSet) -> Result<Vec<f64>> {
    synthesize_with_seed(features, 0)
}

/// Synthesis with an explicit seed for the aperiodic excitation.
pub fn synthesize_with_seed(features: &FeatureSet, seed: u64) -> Result<Vec<f64>> {
    features.validate()?;
    let cfg = VocoderConfig::default();
    let frames = features.frames();
    let total = frames * HOP;
    let half = FFT_SIZE / 2 + 1;
    let fft = FftPair::new(FFT_SIZE);
    let decoder = McepDecoder::new(features.mcep.shape()[0], half, cfg.alpha);
    let envelopes: Vec<Vec<f64>> = (0..frames)
        .map(|t| decoder.decode(&features.mcep_frame(t)))
        .collect();
    let band_of_bin: Vec<usize> = (0..half)
        .map(|k| {
            let f = k as f64 * SAMPLE_RATE as f64 / FFT_SIZE as f64;
            AP_BAND_EDGES
                .iter()
                .position(|&e| f < e)
                .unwrap_or(AP_BANDS - 1)
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; total + FFT_SIZE];
    let mut pos = 0.0f64;
    while (pos.round() as usize) < total {
        let n = pos.round() as usize;
        let frame = ((n + HOP / 2) / HOP).min(frames - 1);
        let f0 = features.f0[frame];
        let env = &envelopes[frame];
        let (period, ap) = if f0 > 0.0 {
            (SAMPLE_RATE as f64 / f0, features.ap_frame(frame))
        } else {
            (HOP as f64, [1.0; AP_BANDS])
        };

        if f0 > 0.0 && ap.iter().any(|&a| a < 1.0) {
            let log_mag: Vec<f64> = (0..half)
                .map(|k| {
                    0.5 * (env[k].max(POWER_FLOOR)
                        * period
                        * (1.0 - ap[band_of_bin[k]]).max(WEIGHT_FLOOR))
                    .ln()
                })
                .collect();
            let h = fft.min_phase_response(&log_mag);
            add_at(&mut out, n, &h);
        }
        if ap.iter().any(|&a| a > 0.0) {
            let len = (period.round() as usize).max(1);
            let noise: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
            let log_mag: Vec<f64> = (0..half)
                .map(|k| {
                    0.5 * (env[k].max(POWER_FLOOR) * ap[band_of_bin[k]].max(WEIGHT_FLOOR)).ln()
                })
                .collect();
            let filter = fft.min_phase_spectrum(&log_mag);
            let mut spec: Vec<Complex64> = fft
                .spectrum(&noise)
                .iter()
                .zip(&filter)
                .map(|(a, b)| a * b)
                .collect();
            fft.inverse_in_place(&mut spec);
            let y: Vec<f64> = spec.iter().map(|c| c.re).collect();
            add_at(&mut out, n, &y);
        }
        pos += period;
    }
    out.truncate(total);
    Ok(out)
}

fn add_at(out: &mut [f64], at: usize, x: &[f64]) {
    for (o, v) in out[at..].iter_mut().zip(x) {
        *o += v;
    }
}
