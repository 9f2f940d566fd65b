//! Objective measures: short-time objective intelligibility (STOI) and
//! log-spectral distance (LSD), plus the per-utterance report.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::dsp::FftPair;
use crate::error::{Error, Result};
use crate::vocoder::{analyze, decoded_envelopes, POWER_FLOOR, SAMPLE_RATE};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoiConfig {
    pub sample_rate: u32,
    pub frame: usize,
    pub fft: usize,
    pub bands: usize,
    pub lowest_center: f64,
    /// Frames per correlation segment.
    pub segment: usize,
    /// Lower signal-to-distortion bound in dB.
    pub beta: f64,
    /// Frames more than this many dB below the loudest reference frame are
    /// dropped from both signals.
    pub dynamic_range: f64,
}

impl Default for StoiConfig {
    fn default() -> Self {
        Self {
            sample_rate: 10_000,
            frame: 256,
            fft: 512,
            bands: 15,
            lowest_center: 150.0,
            segment: 30,
            beta: -15.0,
            dynamic_range: 40.0,
        }
    }
}

impl StoiConfig {
    pub fn validate(&self) -> Result<()> {
        let top = self.lowest_center * 2f64.powf((self.bands as f64 - 1.0) / 3.0 + 1.0 / 6.0);
        if self.segment == 0
            || self.beta >= 0.0
            || top > self.sample_rate as f64 / 2.0
            || self.frame > self.fft
        {
            return Err(Error::Config(format!(
                "invalid STOI configuration {self:?}"
            )));
        }
        Ok(())
    }

    /// `[lo, hi)` DFT bin ranges of the one-third octave bands.
    pub fn band_bins(&self) -> Vec<(usize, usize)> {
        let bin_hz = self.sample_rate as f64 / self.fft as f64;
        let nearest = |f: f64| ((f / bin_hz).round() as usize).min(self.fft / 2);
        (0..self.bands)
            .map(|j| {
                let center = self.lowest_center * 2f64.powf(j as f64 / 3.0);
                (
                    nearest(center * 2f64.powf(-1.0 / 6.0)),
                    nearest(center * 2f64.powf(1.0 / 6.0)),
                )
            })
            .collect()
    }
}

/// Band-limited resampling with a Hann-windowed sinc kernel.
pub fn resample(x: &[f64], from: u32, to: u32) -> Vec<f64> {
    if from == to {
        return x.to_vec();
    }
    let ratio = to as f64 / from as f64;
    let cutoff = ratio.min(1.0) * 0.95;
    // kernel half-width in input samples
    let half = (16.0 / cutoff).ceil();
    let n_out = ((x.len() as f64) * ratio).floor() as usize;
    (0..n_out)
        .map(|n| {
            let center = n as f64 / ratio;
            let lo = ((center - half).ceil().max(0.0)) as usize;
            let hi = ((center + half).floor() as usize).min(x.len().saturating_sub(1));
            (lo..=hi)
                .map(|k| {
                    let t = k as f64 - center;
                    let w = 0.5 + 0.5 * (PI * t / half).cos();
                    let arg = cutoff * t;
                    let sinc = if arg.abs() < 1e-12 {
                        1.0
                    } else {
                        (PI * arg).sin() / (PI * arg)
                    };
                    x[k] * cutoff * sinc * w
                })
                .sum()
        })
        .collect()
}

fn stoi_window(len: usize) -> Vec<f64> {
    // symmetric Hann without the zero endpoints
    (1..=len)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (len + 1) as f64).cos())
        .collect()
}

/// Drops frames whose windowed reference energy is more than
/// `dynamic_range` dB below the loudest frame, then overlap-adds the kept
/// frames of both signals.
pub fn remove_silent_frames(x: &[f64], y: &[f64], cfg: &StoiConfig) -> (Vec<f64>, Vec<f64>) {
    let w = stoi_window(cfg.frame);
    let hop = cfg.frame / 2;
    if x.len() < cfg.frame {
        return (x.to_vec(), y.to_vec());
    }
    let starts: Vec<usize> = (0..=(x.len() - cfg.frame) / hop).map(|m| m * hop).collect();
    let energy: Vec<f64> = starts
        .iter()
        .map(|&s| {
            let e = x[s..s + cfg.frame]
                .iter()
                .zip(&w)
                .map(|(a, b)| (a * b).powi(2))
                .sum::<f64>()
                .sqrt();
            20.0 * (e + f64::EPSILON).log10()
        })
        .collect();
    let top = energy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = starts
        .iter()
        .zip(&energy)
        .filter(|(_, &e)| e > top - cfg.dynamic_range)
        .map(|(&s, _)| s)
        .collect();
    let n = if kept.is_empty() {
        0
    } else {
        (kept.len() - 1) * hop + cfg.frame
    };
    let (mut xs, mut ys) = (vec![0.0; n], vec![0.0; n]);
    for (i, &s) in kept.iter().enumerate() {
        for k in 0..cfg.frame {
            xs[i * hop + k] += x[s + k] * w[k];
            ys[i * hop + k] += y[s + k] * w[k];
        }
    }
    (xs, ys)
}

/// One-third octave band magnitudes `[bands][frames]`.
fn band_envelopes(
    x: &[f64],
    cfg: &StoiConfig,
    fft: &FftPair,
    bins: &[(usize, usize)],
) -> Vec<Vec<f64>> {
    let window = stoi_window(cfg.frame);
    let hop = cfg.frame / 2;
    let frames = if x.len() < cfg.frame {
        0
    } else {
        (x.len() - cfg.frame) / hop + 1
    };
    let mut out = vec![Vec::with_capacity(frames); bins.len()];
    for m in 0..frames {
        let seg: Vec<f64> = x[m * hop..m * hop + cfg.frame]
            .iter()
            .zip(&window)
            .map(|(a, w)| a * w)
            .collect();
        let p = fft.power(&seg);
        for (j, &(lo, hi)) in bins.iter().enumerate() {
            out[j].push(p[lo..hi].iter().sum::<f64>().sqrt());
        }
    }
    out
}

pub fn stoi(reference: &[f64], test: &[f64], rate: u32) -> Result<f64> {
    stoi_with(reference, test, rate, &StoiConfig::default())
}

pub fn stoi_with(reference: &[f64], test: &[f64], rate: u32, cfg: &StoiConfig) -> Result<f64> {
    cfg.validate()?;
    if reference.len() != test.len() {
        return Err(Error::Data(format!(
            "STOI needs equal lengths, got {} and {} samples",
            reference.len(),
            test.len()
        )));
    }
    if reference.iter().all(|&v| v == 0.0) {
        return Err(Error::Data("STOI reference signal is silent".into()));
    }
    let x = resample(reference, rate, cfg.sample_rate);
    let y = resample(test, rate, cfg.sample_rate);
    let (x, y) = remove_silent_frames(&x, &y, cfg);
    let fft = FftPair::new(cfg.fft);
    let bins = cfg.band_bins();
    let xb = band_envelopes(&x, cfg, &fft, &bins);
    let yb = band_envelopes(&y, cfg, &fft, &bins);
    let frames = xb[0].len();
    if frames < cfg.segment {
        return Err(Error::Data(format!(
            "STOI needs at least {} frames, signal gives {frames}",
            cfg.segment
        )));
    }
    let clip = 1.0 + 10f64.powf(-cfg.beta / 20.0);
    let n = cfg.segment;
    let mut total = 0.0;
    let mut count = 0usize;
    for m in n - 1..frames {
        for j in 0..bins.len() {
            let xs = &xb[j][m + 1 - n..=m];
            let ys = &yb[j][m + 1 - n..=m];
            let nx = xs.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny = ys.iter().map(|v| v * v).sum::<f64>().sqrt();
            let alpha = if ny > 0.0 { nx / ny } else { 0.0 };
            let yc: Vec<f64> = xs
                .iter()
                .zip(ys)
                .map(|(a, b)| (alpha * b).min(clip * a))
                .collect();
            total += correlation(xs, &yc);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Sample correlation coefficient; 0 when either side is constant.
fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        ab += dx * dy;
        aa += dx * dx;
        bb += dy * dy;
    }
    let den = (aa * bb).sqrt();
    if den > 0.0 {
        ab / den
    } else {
        0.0
    }
}

/// Mean over frames of the per-frame RMS (over bins) of `10·log10(p / p̂)`,
/// with both spectra floored at 1e-10.
pub fn lsd(reference: &[Vec<f64>], test: &[Vec<f64>]) -> Result<f64> {
    if reference.len() != test.len() || reference.is_empty() {
        return Err(Error::Data(format!(
            "LSD needs matching nonempty frame counts, got {} and {}",
            reference.len(),
            test.len()
        )));
    }
    let mut sum = 0.0;
    for (t, (p, q)) in reference.iter().zip(test).enumerate() {
        if p.len() != q.len() || p.is_empty() {
            return Err(Error::Data(format!(
                "LSD frame {t}: bin counts {} and {} differ",
                p.len(),
                q.len()
            )));
        }
        let sq: f64 = p
            .iter()
            .zip(q)
            .map(|(a, b)| (10.0 * (a.max(POWER_FLOOR) / b.max(POWER_FLOOR)).log10()).powi(2))
            .sum();
        sum += (sq / p.len() as f64).sqrt();
    }
    Ok(sum / reference.len() as f64)
}

/// Bins per LSD frame.
pub const LSD_BINS: usize = 512;

/// Power envelopes used for LSD: the vocoder's smoothed envelope (decoded
/// from its cepstrum) on bins `0..512` at the 5 ms hop.
pub fn lsd_spectra(waveform: &[f64]) -> Result<Vec<Vec<f64>>> {
    let f = analyze(waveform, SAMPLE_RATE)?;
    Ok(
        decoded_envelopes(&f, crate::vocoder::VocoderConfig::default().alpha)
            .into_iter()
            .map(|mut e| {
                e.truncate(LSD_BINS);
                e
            })
            .collect(),
    )
}

/// LSD between two waveforms, over their common frames.
pub fn lsd_waveforms(reference: &[f64], test: &[f64]) -> Result<f64> {
    let mut p = lsd_spectra(reference)?;
    let mut q = lsd_spectra(test)?;
    let n = p.len().min(q.len());
    p.truncate(n);
    q.truncate(n);
    lsd(&p, &q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub id: String,
    pub stoi: f64,
    pub lsd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub mean_stoi: f64,
    pub mean_lsd: f64,
}

impl EvalReport {
    /// Sorts rows by id and computes the averages.
    pub fn from_rows(mut rows: Vec<EvalRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Data("no utterances to evaluate".into()));
        }
        rows.sort_by(|a, b| a.id.cmp(&b.id));
        let n = rows.len() as f64;
        let mean_stoi = rows.iter().map(|r| r.stoi).sum::<f64>() / n;
        let mean_lsd = rows.iter().map(|r| r.lsd).sum::<f64>() / n;
        Ok(Self {
            rows,
            mean_stoi,
            mean_lsd,
        })
    }

    pub fn to_table(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.id.len())
            .max()
            .unwrap_or(0)
            .max(9);
        let mut s = format!(
            "{:<width$}  {:>8}  {:>9}\n",
            "utterance", "STOI", "LSD (dB)"
        );
        for r in &self.rows {
            let _ = writeln!(s, "{:<width$}  {:>8.4}  {:>9.4}", r.id, r.stoi, r.lsd);
        }
        let _ = writeln!(
            s,
            "{:<width$}  {:>8.4}  {:>9.4}",
            "average", self.mean_stoi, self.mean_lsd
        );
        s
    }

    /// Tab-separated records: header, one row per utterance, then `average`.
    pub fn to_records(&self) -> String {
        let mut s = String::from("id\tstoi\tlsd\n");
        for r in &self.rows {
            let _ = writeln!(s, "{}\t{}\t{}", r.id, r.stoi, r.lsd);
        }
        let _ = writeln!(s, "average\t{}\t{}", self.mean_stoi, self.mean_lsd);
        s
    }

    pub fn parse_records(text: &str) -> Result<Self> {
        let bad = |r: String| Error::format("report", r);
        let mut lines = text.lines();
        if lines.next() != Some("id\tstoi\tlsd") {
            return Err(bad("missing header".into()));
        }
        let mut rows = Vec::new();
        let mut averages = None;
        for line in lines.filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(bad(format!("expected 3 fields in {line:?}")));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| bad(format!("bad number {s:?}")))
            };
            if f[0] == "average" {
                averages = Some((num(f[1])?, num(f[2])?));
            } else {
                rows.push(EvalRow {
                    id: f[0].to_string(),
                    stoi: num(f[1])?,
                    lsd: num(f[2])?,
                });
            }
        }
        let report = Self::from_rows(rows)?;
        match averages {
            Some((s, l)) if s == report.mean_stoi && l == report.mean_lsd => Ok(report),
            Some(_) => Err(bad("average row does not match the utterance rows".into())),
            None => Err(bad("missing average row".into())),
        }
    }
}

/// STOI and LSD of one enhanced utterance against its reference; the
/// enhanced signal is trimmed or zero-padded to the reference length.
pub fn score_pair(id: &str, reference: &[f64], enhanced: &[f64]) -> Result<EvalRow> {
    let mut y = enhanced.to_vec();
    y.resize(reference.len(), 0.0);
    Ok(EvalRow {
        id: id.to_string(),
        stoi: stoi(reference, &y, SAMPLE_RATE)?,
        lsd: lsd_waveforms(reference, &y)?,
    })
}
