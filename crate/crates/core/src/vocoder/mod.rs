//! WORLD-style analysis/synthesis: F0, mel-cepstral envelope and band
//! aperiodicity on a 5 ms frame grid at 16 kHz, plus log-Gaussian F0 conversion.

mod aperiodicity;
mod container;
mod envelope;
mod lgn;
mod mcep;
mod pitch;
mod synthesis;

pub use container::{read_features, write_features, FEATURE_MAGIC};
pub use envelope::spectral_envelope;
pub use lgn::{f0_statistics, lgn_convert, F0Stats};
pub use mcep::{mcep_decode, mcep_encode, warp_frequency};
pub use pitch::estimate_f0;
pub use synthesis::{synthesize, synthesize_with_seed};

use bcenhance_nn::Tensor;

use crate::dsp::FftPair;
use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;
/// 5 ms at 16 kHz.
pub const HOP: usize = 80;
pub const FFT_SIZE: usize = 1024;
pub const MCEP_DIM: usize = 24;
pub const AP_BANDS: usize = 4;
/// Upper edges (Hz) of the aperiodicity bands; the last band ends at Nyquist.
pub const AP_BAND_EDGES: [f64; AP_BANDS] = [1000.0, 2500.0, 4500.0, 8000.0];
/// Spectral power floor applied before taking logarithms.
pub const POWER_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VocoderConfig {
    pub f0_floor: f64,
    pub f0_ceil: f64,
    /// Minimum normalized autocorrelation peak for a voiced decision.
    pub voicing_threshold: f64,
    /// All-pass warping constant of the mel-cepstrum.
    pub alpha: f64,
    pub mcep_dim: usize,
}

impl Default for VocoderConfig {
    fn default() -> Self {
        Self {
            f0_floor: 50.0,
            f0_ceil: 500.0,
            voicing_threshold: 0.3,
            alpha: 0.42,
            mcep_dim: MCEP_DIM,
        }
    }
}

/// Per-utterance vocoder features on the 5 ms grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    /// Hz per frame, 0 for unvoiced.
    pub f0: Vec<f64>,
    /// `[MCEP_DIM, T]`.
    pub mcep: Tensor,
    /// `[AP_BANDS, T]`, each in `[0, 1]`.
    pub ap: Tensor,
}

impl FeatureSet {
    pub fn frames(&self) -> usize {
        self.f0.len()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.f0.len();
        if self.mcep.rank() != 2 || self.mcep.shape()[1] != t {
            return Err(Error::Data(format!(
                "mcep shape {:?} does not match {t} frames",
                self.mcep.shape()
            )));
        }
        if self.ap.shape() != [AP_BANDS, t] {
            return Err(Error::Data(format!(
                "aperiodicity shape {:?} does not match [{AP_BANDS}, {t}]",
                self.ap.shape()
            )));
        }
        if let Some(bad) = self
            .f0
            .iter()
            .find(|&&f| f != 0.0 && !(50.0..=500.0).contains(&f))
        {
            return Err(Error::Data(format!(
                "f0 value {bad} Hz outside 0 or [50, 500]"
            )));
        }
        if let Some(bad) = self.ap.data().iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::Data(format!("aperiodicity {bad} outside [0, 1]")));
        }
        if !self.mcep.is_finite() {
            return Err(Error::Data("non-finite mel-cepstrum".into()));
        }
        Ok(())
    }

    /// MCEP column of frame `t`.
    pub fn mcep_frame(&self, t: usize) -> Vec<f64> {
        let (q, n) = (self.mcep.shape()[0], self.mcep.shape()[1]);
        (0..q).map(|i| self.mcep.data()[i * n + t]).collect()
    }

    pub fn ap_frame(&self, t: usize) -> [f64; AP_BANDS] {
        let n = self.frames();
        std::array::from_fn(|b| self.ap.data()[b * n + t])
    }
}

/// Number of analysis frames for `samples` at the 5 ms hop.
pub fn frame_count(samples: usize) -> usize {
    samples / HOP + 1
}

pub fn check_rate(sample_rate: u32) -> Result<()> {
    if sample_rate != SAMPLE_RATE {
        return Err(Error::Input(format!(
            "sample rate {sample_rate} Hz is not supported; resample the input to {SAMPLE_RATE} Hz"
        )));
    }
    Ok(())
}

pub fn analyze(waveform: &[f64], sample_rate: u32) -> Result<FeatureSet> {
    analyze_with(waveform, sample_rate, &VocoderConfig::default())
}

pub fn analyze_with(waveform: &[f64], sample_rate: u32, cfg: &VocoderConfig) -> Result<FeatureSet> {
    check_rate(sample_rate)?;
    if waveform.len() < FFT_SIZE {
        return Err(Error::Input(format!(
            "waveform has {} samples; at least one {FFT_SIZE}-sample analysis window is required",
            waveform.len()
        )));
    }
    if waveform.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("waveform contains non-finite samples".into()));
    }
    let t = frame_count(waveform.len());
    let fft = FftPair::new(FFT_SIZE);
    let f0 = estimate_f0(waveform, t, cfg);
    let mut mcep = vec![0.0; cfg.mcep_dim * t];
    let mut ap = vec![0.0; AP_BANDS * t];
    for (i, &f) in f0.iter().enumerate() {
        let env = spectral_envelope(waveform, i * HOP, f, &fft);
        let c = mcep_encode(&env, cfg.mcep_dim, cfg.alpha);
        for (q, v) in c.iter().enumerate() {
            mcep[q * t + i] = *v;
        }
        let a = aperiodicity::band_aperiodicity(waveform, i * HOP, f, &fft);
        for (b, v) in a.iter().enumerate() {
            ap[b * t + i] = *v;
        }
    }
    Ok(FeatureSet {
        f0,
        mcep: Tensor::new(&[cfg.mcep_dim, t], mcep)?,
        ap: Tensor::new(&[AP_BANDS, t], ap)?,
    })
}

/// Power envelope (`FFT_SIZE/2 + 1` bins) decoded from every MCEP frame.
pub fn decoded_envelopes(features: &FeatureSet, alpha: f64) -> Vec<Vec<f64>> {
    (0..features.frames())
        .map(|t| mcep_decode(&features.mcep_frame(t), FFT_SIZE / 2 + 1, alpha))
        .collect()
}
