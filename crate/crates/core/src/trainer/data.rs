//! Dataset layout `dir/{bc,ac}/<id>.wav`, feature caching, the train/test
//! split, normalization statistics and crop sampling.

use std::fs;
use std::path::{Path, PathBuf};

use bcenhance_nn::Tensor;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::Mapping;
use crate::audio::read_wav;
use crate::error::{Error, Result};
use crate::vocoder::{analyze, check_rate, read_features, write_features, FeatureSet, MCEP_DIM};

#[derive(Debug, Clone)]
pub struct Utterance {
    pub id: String,
    pub bc: FeatureSet,
    pub ac: FeatureSet,
}

impl Utterance {
    /// Frames usable for aligned crops.
    pub fn aligned_frames(&self) -> usize {
        self.bc.frames().min(self.ac.frames())
    }
}

/// Sorted utterance ids present on both sides. A file on one side only is
/// a data error.
pub fn list_pairs(dir: &Path) -> Result<Vec<String>> {
    let side = |name: &str| -> Result<Vec<String>> {
        let d = dir.join(name);
        if !d.is_dir() {
            return Err(Error::Data(format!(
                "dataset {} has no {name}/ directory",
                dir.display()
            )));
        }
        let mut ids = Vec::new();
        for entry in fs::read_dir(&d).map_err(|e| Error::io(&d, e))? {
            let p = entry.map_err(|e| Error::io(&d, e))?.path();
            if p.extension().is_some_and(|e| e == "wav") {
                if let Some(stem) = p.file_stem().and_then(|s| s.to_str()) {
                    ids.push(stem.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    };
    let bc = side("bc")?;
    let ac = side("ac")?;
    for id in &bc {
        if ac.binary_search(id).is_err() {
            return Err(Error::Data(format!(
                "utterance {id:?} has bc audio but no ac/{id}.wav"
            )));
        }
    }
    for id in &ac {
        if bc.binary_search(id).is_err() {
            return Err(Error::Data(format!(
                "utterance {id:?} has ac audio but no bc/{id}.wav"
            )));
        }
    }
    if bc.is_empty() {
        return Err(Error::Data(format!(
            "dataset {} contains no utterances",
            dir.display()
        )));
    }
    Ok(bc)
}

pub fn wav_path(dir: &Path, side: &str, id: &str) -> PathBuf {
    dir.join(side).join(format!("{id}.wav"))
}

fn is_fresh(cache: &Path, source: &Path) -> bool {
    let mtime = |p: &Path| fs::metadata(p).and_then(|m| m.modified()).ok();
    matches!((mtime(cache), mtime(source)), (Some(c), Some(s)) if c >= s)
}

/// Features of one WAV file, read from the `.bcf1` beside it when that is at
/// least as new as the audio, otherwise analyzed and cached. Returns whether
/// the cache was (re)written.
pub fn cached_features(wav: &Path) -> Result<(FeatureSet, bool)> {
    let cache = wav.with_extension("bcf1");
    if is_fresh(&cache, wav) {
        if let Ok(f) = read_features(&cache) {
            return Ok((f, false));
        }
        log::warn!(
            "{}: unreadable feature cache, re-extracting",
            cache.display()
        );
    }
    let (samples, rate) = read_wav(wav)?;
    check_rate(rate).map_err(|e| Error::Input(format!("{}: {e}", wav.display())))?;
    let f = analyze(&samples, rate)?;
    write_features(&cache, &f)?;
    Ok((f, true))
}

/// Applies `f` to every item on up to `available_parallelism` threads;
/// results keep the input order.
pub(crate) fn parallel_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if items.is_empty() {
        return Vec::new();
    }
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let chunk = items.len().div_ceil(workers);
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(f).collect::<Vec<R>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker thread panicked"))
            .collect()
    })
}

/// Loads (extracting where needed) the listed utterances, analyzing files in
/// parallel; results keep the order of `ids`.
pub fn load_utterances(dir: &Path, ids: &[String]) -> Result<Vec<Utterance>> {
    parallel_map(ids, |id| {
        let (bc, _) = cached_features(&wav_path(dir, "bc", id))?;
        let (ac, _) = cached_features(&wav_path(dir, "ac", id))?;
        Ok(Utterance {
            id: id.clone(),
            bc,
            ac,
        })
    })
    .into_iter()
    .collect()
}

/// Counts from [`extract_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExtractSummary {
    pub extracted: usize,
    pub cached: usize,
}

/// Makes sure every WAV of the dataset has an up-to-date `.bcf1` beside it.
pub fn extract_dataset(dir: &Path) -> Result<ExtractSummary> {
    let ids = list_pairs(dir)?;
    let files: Vec<PathBuf> = ids
        .iter()
        .flat_map(|id| [wav_path(dir, "bc", id), wav_path(dir, "ac", id)])
        .collect();
    let wrote = parallel_map(&files, |f| cached_features(f).map(|(_, w)| w))
        .into_iter()
        .collect::<Result<Vec<bool>>>()?;
    let extracted = wrote.iter().filter(|&&w| w).count();
    Ok(ExtractSummary {
        extracted,
        cached: wrote.len() - extracted,
    })
}

/// 4:1 train/test split by utterance: ids are shuffled with `seed` and the
/// first `floor(n / 5)` become the test set. Both halves come back sorted.
pub fn split_ids(ids: &[String], seed: u64) -> (Vec<String>, Vec<String>) {
    let mut shuffled = ids.to_vec();
    shuffled.sort();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = shuffled.len() / 5;
    let mut test = shuffled[..n_test].to_vec();
    let mut train = shuffled[n_test..].to_vec();
    train.sort();
    test.sort();
    (train, test)
}

/// Per-coefficient mean and standard deviation of MCEPs.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Population statistics over every frame; a constant coefficient gets
    /// unit scale.
    pub fn from_features<'a>(sets: impl IntoIterator<Item = &'a FeatureSet>) -> Result<Self> {
        let mut sum = vec![0.0; MCEP_DIM];
        let mut sq = vec![0.0; MCEP_DIM];
        let mut n = 0usize;
        for f in sets {
            let t = f.frames();
            for (q, row) in f.mcep.data().chunks(t).enumerate() {
                sum[q] += row.iter().sum::<f64>();
                sq[q] += row.iter().map(|v| v * v).sum::<f64>();
            }
            n += t;
        }
        if n == 0 {
            return Err(Error::Data("no frames for normalization statistics".into()));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let v = (s / n as f64 - m * m).max(0.0).sqrt();
                if v > 1e-8 {
                    v
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn normalize(&self, mcep: &Tensor) -> Tensor {
        self.map(mcep, |v, m, s| (v - m) / s)
    }

    pub fn denormalize(&self, mcep: &Tensor) -> Tensor {
        self.map(mcep, |v, m, s| v * s + m)
    }

    fn map(&self, mcep: &Tensor, f: impl Fn(f64, f64, f64) -> f64) -> Tensor {
        let t = mcep.shape()[1];
        let data = mcep
            .data()
            .chunks(t)
            .enumerate()
            .flat_map(|(q, row)| row.iter().map(move |&v| (q, v)))
            .map(|(q, v)| f(v, self.mean[q], self.std[q]))
            .collect();
        Tensor::new(mcep.shape(), data).expect("same shape")
    }
}

/// Mirror index into `0..len` without repeating the edge sample.
pub fn reflect_index(i: usize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len - 1);
    let r = i % period;
    if r < len {
        r
    } else {
        period - r
    }
}

/// Columns `start..start + len` of a `[Q, T]` matrix, reflected past the end.
pub fn crop_columns(m: &Tensor, start: usize, len: usize) -> Tensor {
    let t = m.shape()[1];
    let data = m
        .data()
        .chunks(t)
        .flat_map(|row| (start..start + len).map(move |i| row[reflect_index(i, t)]))
        .collect();
    Tensor::new(&[m.shape()[0], len], data).expect("crop shape")
}

/// One training example and where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub b: Tensor,
    pub a: Tensor,
    /// (utterance index, first frame) of the source crop.
    pub b_origin: (usize, usize),
    pub a_origin: (usize, usize),
}

fn crop_start(frames: usize, crop: usize, rng: &mut impl Rng) -> usize {
    if frames > crop {
        rng.random_range(0..=frames - crop)
    } else {
        0
    }
}

/// Crops for the utterance `index`: aligned from the same pair (parallel) or
/// paired with a random AC utterance at an independent offset (nonparallel).
/// Crops are z-normalized with the given statistics.
pub fn make_batch_for(
    data: &[Utterance],
    index: usize,
    mapping: Mapping,
    crop: usize,
    norms: (&NormStats, &NormStats),
    rng: &mut impl Rng,
) -> Result<Batch> {
    if data.is_empty() {
        return Err(Error::Data("cannot sample from an empty dataset".into()));
    }
    let u = &data[index];
    let (b_origin, a_origin) = match mapping {
        Mapping::Parallel => {
            let s = crop_start(u.aligned_frames(), crop, rng);
            ((index, s), (index, s))
        }
        Mapping::Nonparallel => {
            let sb = crop_start(u.bc.frames(), crop, rng);
            let j = rng.random_range(0..data.len());
            let sa = crop_start(data[j].ac.frames(), crop, rng);
            ((index, sb), (j, sa))
        }
    };
    let (b_frames, a_frames) = match mapping {
        Mapping::Parallel => (u.aligned_frames(), u.aligned_frames()),
        Mapping::Nonparallel => (u.bc.frames(), data[a_origin.0].ac.frames()),
    };
    // restrict to the usable frames before cropping so reflection starts there
    let b_src = crop_columns(&u.bc.mcep, 0, b_frames);
    let a_src = crop_columns(&data[a_origin.0].ac.mcep, 0, a_frames);
    Ok(Batch {
        b: norms.0.normalize(&crop_columns(&b_src, b_origin.1, crop)),
        a: norms.1.normalize(&crop_columns(&a_src, a_origin.1, crop)),
        b_origin,
        a_origin,
    })
}

/// [`make_batch_for`] on a uniformly drawn utterance.
pub fn make_batch(
    data: &[Utterance],
    mapping: Mapping,
    crop: usize,
    norms: (&NormStats, &NormStats),
    rng: &mut impl Rng,
) -> Result<Batch> {
    if data.is_empty() {
        return Err(Error::Data("cannot sample from an empty dataset".into()));
    }
    let i = rng.random_range(0..data.len());
    make_batch_for(data, i, mapping, crop, norms, rng)
}
