//! PNG rendering of loss curves and spectrogram comparisons. No text is
//! drawn: panel order is fixed and documented instead.

use std::path::{Path, PathBuf};

use bcenhance::audio::read_wav;
use bcenhance::dsp::spectrogram;
use bcenhance::trainer::{enhance, evaluation_ids, read_loss_log, wav_path, StepLosses, TrainState};
use bcenhance::vocoder::POWER_FLOOR;
use bcenhance::{Error, Result};
use image::{Rgb, RgbImage};

pub const LOSS_PLOT: &str = "losses.png";

const PANEL_W: u32 = 320;
const PANEL_H: u32 = 200;
const MARGIN: u32 = 8;
const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const FRAME: Rgb<u8> = Rgb([160, 160, 160]);
const CURVE: Rgb<u8> = Rgb([20, 70, 180]);

const SPEC_SIZE: usize = 512;
const SPEC_HOP: usize = 128;
const DYNAMIC_RANGE_DB: f64 = 80.0;

fn save(img: &RgbImage, path: &Path) -> Result<()> {
    img.save(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    })
}

fn frame_rect(img: &mut RgbImage, x0: u32, y0: u32, w: u32, h: u32) {
    for x in x0..x0 + w {
        img.put_pixel(x, y0, FRAME);
        img.put_pixel(x, y0 + h - 1, FRAME);
    }
    for y in y0..y0 + h {
        img.put_pixel(x0, y, FRAME);
        img.put_pixel(x0 + w - 1, y, FRAME);
    }
}

fn line(img: &mut RgbImage, (x0, y0): (f64, f64), (x1, y1): (f64, f64)) {
    let steps = (x1 - x0).abs().max((y1 - y0).abs()).ceil().max(1.0) as usize;
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let x = (x0 + t * (x1 - x0)).round() as u32;
        let y = (y0 + t * (y1 - y0)).round() as u32;
        if x < img.width() && y < img.height() {
            img.put_pixel(x, y, CURVE);
        }
    }
}

/// Draws one series into the panel at (x0, y0); non-finite points break the curve.
fn draw_series(img: &mut RgbImage, x0: u32, y0: u32, xs: &[f64], ys: &[Option<f64>]) {
    frame_rect(img, x0, y0, PANEL_W, PANEL_H);
    let finite: Vec<f64> = ys.iter().flatten().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return;
    }
    let (lo, hi) = finite.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (xmin, xmax) = (xs[0], xs[xs.len() - 1]);
    let xspan = if xmax > xmin { xmax - xmin } else { 1.0 };
    let inner_w = (PANEL_W - 2 * MARGIN) as f64;
    let inner_h = (PANEL_H - 2 * MARGIN) as f64;
    let px = |x: f64| (x0 + MARGIN) as f64 + (x - xmin) / xspan * inner_w;
    let py = |y: f64| (y0 + MARGIN) as f64 + (1.0 - (y - lo) / span) * inner_h;
    let mut prev: Option<(f64, f64)> = None;
    for (&x, y) in xs.iter().zip(ys) {
        match y.filter(|v| v.is_finite()) {
            Some(y) => {
                let p = (px(x), py(y));
                line(img, prev.unwrap_or(p), p);
                prev = Some(p);
            }
            None => prev = None,
        }
    }
}

/// Six panels in a 3x2 grid, row-major: adc, add, cyc, id, total, disc.
pub fn plot_losses(log: &Path, out: &Path) -> Result<PathBuf> {
    let records = read_loss_log(log)?;
    if records.is_empty() {
        return Err(Error::Data(format!("{} has no records", log.display())));
    }
    let xs: Vec<f64> = records.iter().map(|r| r.iteration as f64).collect();
    let series: [fn(&StepLosses) -> Option<f64>; 6] = [
        |r| Some(r.adc),
        |r| r.add,
        |r| Some(r.cyc),
        |r| Some(r.id),
        |r| Some(r.total),
        |r| Some(r.disc),
    ];
    let mut img = RgbImage::from_pixel(3 * PANEL_W, 2 * PANEL_H, BACKGROUND);
    for (k, get) in series.iter().enumerate() {
        let ys: Vec<Option<f64>> = records.iter().map(get).collect();
        let (col, row) = (k as u32 % 3, k as u32 / 3);
        draw_series(&mut img, col * PANEL_W, row * PANEL_H, &xs, &ys);
    }
    save(&img, out)?;
    Ok(out.to_path_buf())
}

fn db_image(spec: &[Vec<f64>]) -> Vec<Vec<f64>> {
    spec.iter()
        .map(|row| row.iter().map(|p| 10.0 * p.max(POWER_FLOOR).log10()).collect())
        .collect()
}

/// Grey-scale heat map colouring: dark is loud.
fn shade(db: f64, top: f64) -> Rgb<u8> {
    let t = ((top - db) / DYNAMIC_RANGE_DB).clamp(0.0, 1.0);
    let v = (255.0 * t).round() as u8;
    Rgb([v, v, v])
}

/// Side-by-side dB spectrograms, left to right: BC input, enhanced, AC
/// reference. Frequency rises upward. Written as `spec-<id>.png`.
pub fn plot_spectrograms(state: &TrainState, dataset: &Path, out: &Path, limit: usize) -> Result<Vec<PathBuf>> {
    let ids = evaluation_ids(dataset, state.config.seed)?;
    let mut written = Vec::new();
    for id in ids.iter().take(limit) {
        let (bc, rate) = read_wav(&wav_path(dataset, "bc", id))?;
        let (ac, _) = read_wav(&wav_path(dataset, "ac", id))?;
        let enhanced = enhance(state, &bc, rate)?;
        let panels: Vec<Vec<Vec<f64>>> = [&bc, &enhanced, &ac]
            .iter()
            .map(|w| db_image(&spectrogram(w, SPEC_SIZE, SPEC_HOP)))
            .collect();
        let top = panels
            .iter()
            .flatten()
            .flatten()
            .fold(f64::MIN, |a, &b| a.max(b));
        let bins = SPEC_SIZE / 2 + 1;
        let widths: Vec<u32> = panels.iter().map(|p| p.len() as u32).collect();
        let gap = 4;
        let total_w = widths.iter().sum::<u32>() + gap * 2;
        let mut img = RgbImage::from_pixel(total_w, bins as u32, BACKGROUND);
        let mut x0 = 0;
        for (panel, w) in panels.iter().zip(&widths) {
            for (t, row) in panel.iter().enumerate() {
                for (k, &db) in row.iter().enumerate() {
                    img.put_pixel(x0 + t as u32, (bins - 1 - k) as u32, shade(db, top));
                }
            }
            x0 += w + gap;
        }
        let path = out.join(format!("spec-{id}.png"));
        save(&img, &path)?;
        written.push(path);
    }
    Ok(written)
}
