//! YIN-style period search with a normalized-autocorrelation voicing decision.

use super::{VocoderConfig, HOP, SAMPLE_RATE};
use crate::dsp::segment;

/// Integration length of the difference function (30 ms).
const INTEGRATION: usize = 480;
/// Cumulative-mean-normalized difference threshold for the first dip.
const DIP_THRESHOLD: f64 = 0.2;

pub fn estimate_f0(waveform: &[f64], frames: usize, cfg: &VocoderConfig) -> Vec<f64> {
    let fs = SAMPLE_RATE as f64;
    let min_lag = (fs / cfg.f0_ceil).floor().max(2.0) as usize;
    let max_lag = (fs / cfg.f0_floor).ceil() as usize;
    let span = INTEGRATION + max_lag + 1;
    (0..frames)
        .map(|i| {
            let start = (i * HOP) as isize - (span / 2) as isize;
            let seg = segment(waveform, start, span);
            frame_f0(&seg, min_lag, max_lag, cfg)
        })
        .collect()
}

fn frame_f0(seg: &[f64], min_lag: usize, max_lag: usize, cfg: &VocoderConfig) -> f64 {
    let n = INTEGRATION;
    let energy: f64 = seg[..n].iter().map(|v| v * v).sum();
    if energy <= 1e-12 * n as f64 {
        return 0.0;
    }
    // difference function d(tau) and its cumulative-mean normalization
    let mut cmnd = vec![1.0; max_lag + 2];
    let mut running = 0.0;
    for tau in 1..=max_lag + 1 {
        let d: f64 = (0..n).map(|j| (seg[j] - seg[j + tau]).powi(2)).sum();
        running += d;
        cmnd[tau] = if running > 0.0 {
            d * tau as f64 / running
        } else {
            1.0
        };
    }
    let mut lag = None;
    let mut tau = min_lag;
    while tau <= max_lag {
        if cmnd[tau] < DIP_THRESHOLD {
            while tau < max_lag && cmnd[tau + 1] < cmnd[tau] {
                tau += 1;
            }
            lag = Some(tau);
            break;
        }
        tau += 1;
    }
    // no dip below the threshold: aperiodic frame
    let Some(lag) = lag else {
        return 0.0;
    };

    let peak = (lag.saturating_sub(1).max(min_lag)..=(lag + 1).min(max_lag))
        .map(|l| nccf(seg, l))
        .fold(f64::MIN, f64::max);
    if peak < cfg.voicing_threshold {
        return 0.0;
    }
    let refined = if lag > min_lag && lag < max_lag {
        let (a, b, c) = (cmnd[lag - 1], cmnd[lag], cmnd[lag + 1]);
        let denom = a - 2.0 * b + c;
        if denom.abs() > 1e-12 {
            lag as f64 + (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
        } else {
            lag as f64
        }
    } else {
        lag as f64
    };
    let f0 = SAMPLE_RATE as f64 / refined;
    if (cfg.f0_floor..=cfg.f0_ceil).contains(&f0) {
        f0
    } else {
        0.0
    }
}

/// Normalized cross-correlation between the window and its copy delayed by `lag`.
fn nccf(seg: &[f64], lag: usize) -> f64 {
    let n = INTEGRATION;
    let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
    for j in 0..n {
        let (x, y) = (seg[j], seg[j + lag]);
        xy += x * y;
        xx += x * x;
        yy += y * y;
    }
    if xx <= 0.0 || yy <= 0.0 {
        0.0
    } else {
        xy / (xx * yy).sqrt()
    }
}
