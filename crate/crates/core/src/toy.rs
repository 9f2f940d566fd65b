//! Synthetic paired BC/AC corpus for desk-scale experiments.
//!
//! AC speech is a formant-filtered glottal pulse train with syllabic
//! amplitude envelopes, pitch movement and fricative bursts. The BC channel
//! is the same signal through a steep low-pass (skull transfer) with a small
//! level change, so the pair is sample-synchronous.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::audio::{write_wav, WavEncoding};
use crate::error::{Error, Result};
use crate::vocoder::SAMPLE_RATE;

const FS: f64 = SAMPLE_RATE as f64;

/// (F1, F2, F3) in Hz.
const VOWELS: [(f64, f64, f64); 5] = [
    (730.0, 1090.0, 2440.0),
    (270.0, 2290.0, 3010.0),
    (530.0, 1840.0, 2480.0),
    (570.0, 840.0, 2410.0),
    (300.0, 870.0, 2240.0),
];

#[derive(Debug, Clone)]
pub struct ToyUtterance {
    pub id: String,
    pub bc: Vec<f64>,
    pub ac: Vec<f64>,
}

/// Two-pole resonator with unity gain at DC-ish normalization.
struct Resonator {
    a1: f64,
    a2: f64,
    gain: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new(freq: f64, bandwidth: f64) -> Self {
        let r = (-PI * bandwidth / FS).exp();
        let theta = 2.0 * PI * freq / FS;
        let a1 = 2.0 * r * theta.cos();
        let a2 = -r * r;
        Self {
            a1,
            a2,
            gain: 1.0 - a1 - a2,
            y1: 0.0,
            y2: 0.0,
        }
    }

    fn set(&mut self, freq: f64, bandwidth: f64) {
        let n = Self::new(freq, bandwidth);
        self.a1 = n.a1;
        self.a2 = n.a2;
        self.gain = n.gain;
    }

    fn tick(&mut self, x: f64) -> f64 {
        let y = self.gain * x + self.a1 * self.y1 + self.a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// RBJ low-pass biquad.
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
    x: [f64; 2],
    y: [f64; 2],
}

impl Biquad {
    fn lowpass(cutoff: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * cutoff / FS;
        let alpha = w0.sin() / (2.0 * q);
        let cos = w0.cos();
        let a0 = 1.0 + alpha;
        Self {
            b: [
                (1.0 - cos) / 2.0 / a0,
                (1.0 - cos) / a0,
                (1.0 - cos) / 2.0 / a0,
            ],
            a: [-2.0 * cos / a0, (1.0 - alpha) / a0],
            x: [0.0; 2],
            y: [0.0; 2],
        }
    }

    fn tick(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.b[1] * self.x[0] + self.b[2] * self.x[1]
            - self.a[0] * self.y[0]
            - self.a[1] * self.y[1];
        self.x = [x, self.x[0]];
        self.y = [y, self.y[0]];
        y
    }
}

/// Steady vowel: pulse train at `f0` through three formant resonators.
pub fn synthetic_vowel(
    seconds: f64,
    f0: f64,
    formants: (f64, f64, f64),
    amplitude: f64,
) -> Vec<f64> {
    let n = (seconds * FS) as usize;
    let mut res = [
        Resonator::new(formants.0, 80.0),
        Resonator::new(formants.1, 100.0),
        Resonator::new(formants.2, 140.0),
    ];
    let mut tilt = 0.0;
    let mut phase = 0.0;
    let mut raw: Vec<f64> = (0..n)
        .map(|_| {
            phase += f0 / FS;
            let pulse = if phase >= 1.0 {
                phase -= 1.0;
                1.0
            } else {
                0.0
            };
            tilt = 0.9 * tilt + pulse;
            res.iter_mut().fold(tilt, |x, r| r.tick(x))
        })
        .collect();
    normalize(&mut raw, amplitude);
    raw
}

/// Sawtooth at `f0` Hz.
pub fn sawtooth(seconds: f64, f0: f64, amplitude: f64) -> Vec<f64> {
    let n = (seconds * FS) as usize;
    (0..n)
        .map(|i| {
            let p = (i as f64 * f0 / FS).fract();
            amplitude * (2.0 * p - 1.0)
        })
        .collect()
}

fn normalize(x: &mut [f64], peak: f64) {
    let m = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m > 0.0 {
        x.iter_mut().for_each(|v| *v *= peak / m);
    }
}

/// One AC utterance of roughly `seconds` seconds.
pub fn synthetic_utterance(seconds: f64, base_f0: f64, rng: &mut impl Rng) -> Vec<f64> {
    let n = (seconds * FS) as usize;
    let mut out = vec![0.0; n];
    let mut res = [
        Resonator::new(500.0, 80.0),
        Resonator::new(1500.0, 100.0),
        Resonator::new(2500.0, 140.0),
    ];
    let mut fric = Resonator::new(5000.0, 1500.0);
    let mut pos = (0.08 * FS) as usize;
    let mut phase = 0.0;
    let mut tilt = 0.0;
    while pos + (0.1 * FS) as usize <= n {
        let syl = ((0.12 + 0.12 * rng.random::<f64>()) * FS) as usize;
        let syl = syl.min(n - pos - (0.02 * FS) as usize);
        let v = VOWELS[rng.random_range(0..VOWELS.len())];
        let start_f0 = base_f0 * (0.9 + 0.25 * rng.random::<f64>());
        let end_f0 = start_f0 * (0.85 + 0.2 * rng.random::<f64>());
        let level = 0.5 + 0.5 * rng.random::<f64>();
        // optional fricative onset
        if rng.random::<f64>() < 0.5 {
            let len = (0.04 * FS) as usize;
            for i in 0..len.min(pos) {
                let e: f64 = StandardNormal.sample(rng);
                let w = (PI * i as f64 / len as f64).sin();
                out[pos - len + i] += 0.08 * level * w * fric.tick(e) * 4.0;
            }
        }
        for (i, r) in res.iter_mut().enumerate() {
            let f = [v.0, v.1, v.2][i];
            r.set(f, [80.0, 100.0, 140.0][i]);
        }
        for i in 0..syl {
            let frac = i as f64 / syl as f64;
            let f0 = start_f0 + (end_f0 - start_f0) * frac;
            phase += f0 / FS;
            let pulse = if phase >= 1.0 {
                phase -= 1.0;
                1.0
            } else {
                0.0
            };
            tilt = 0.9 * tilt + pulse;
            let env = (PI * frac).sin().powf(0.6);
            let y = res.iter_mut().fold(tilt, |x, r| r.tick(x));
            out[pos + i] += level * env * y;
        }
        pos += syl + ((0.03 + 0.08 * rng.random::<f64>()) * FS) as usize;
    }
    normalize(&mut out, 0.5);
    // low-level background so silent stretches stay finite in the log domain
    for v in &mut out {
        let e: f64 = StandardNormal.sample(rng);
        *v += 1e-4 * e;
    }
    out
}

/// Bone-conduction channel: two cascaded low-pass sections (cutoff ~1.5 kHz)
/// and a mild level change.
pub fn bone_conduct(ac: &[f64]) -> Vec<f64> {
    let mut a = Biquad::lowpass(1500.0, 0.9);
    let mut b = Biquad::lowpass(1800.0, 0.6);
    ac.iter().map(|&x| 0.8 * b.tick(a.tick(x))).collect()
}

pub fn toy_corpus(count: usize, seconds: f64, seed: u64) -> Vec<ToyUtterance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let base = if i % 2 == 0 { 120.0 } else { 190.0 };
            let ac = synthetic_utterance(seconds, base, &mut rng);
            ToyUtterance {
                id: format!("utt{i:03}"),
                bc: bone_conduct(&ac),
                ac,
            }
        })
        .collect()
}

/// Writes `dir/{bc,ac}/<id>.wav` (16-bit PCM).
pub fn write_toy_corpus(dir: &Path, count: usize, seconds: f64, seed: u64) -> Result<Vec<String>> {
    for side in ["bc", "ac"] {
        let d = dir.join(side);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let corpus = toy_corpus(count, seconds, seed);
    for u in &corpus {
        write_wav(
            &dir.join("bc").join(format!("{}.wav", u.id)),
            &u.bc,
            SAMPLE_RATE,
            WavEncoding::Pcm16,
        )?;
        write_wav(
            &dir.join("ac").join(format!("{}.wav", u.id)),
            &u.ac,
            SAMPLE_RATE,
            WavEncoding::Pcm16,
        )?;
    }
    Ok(corpus.into_iter().map(|u| u.id).collect())
}
