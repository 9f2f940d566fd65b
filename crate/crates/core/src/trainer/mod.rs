//! Training loop, loss log, checkpoints, enhancement and evaluation.
//!
//! Output directory of a run:
//!
//! - `config.txt`: effective configuration
//! - `loss.log`: one tab-separated record per iteration
//! - `latest.bcck`: state after the last finished epoch
//! - `ckpt-eNNNNN.bcck`: state after epoch `NNNNN`, every `checkpoint_every` epochs

pub mod config;
pub mod data;
pub mod state;
pub mod step;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use bcenhance_nn::Tensor;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{parse_pairs, DiscriminatorUpdate, Mapping, TrainConfig, TRAIN_KEYS};
pub use data::{
    cached_features, crop_columns, extract_dataset, list_pairs, load_utterances, make_batch,
    make_batch_for, reflect_index, split_ids, wav_path, Batch, ExtractSummary, NormStats,
    Utterance,
};
pub use state::{TrainState, Trained};
pub use step::{discriminator_update, generator_update, train_step, StepLosses, LOSS_LOG_HEADER};

use crate::audio::read_wav;
use crate::error::{Error, Result};
use crate::metrics::{score_pair, EvalReport, EvalRow};
use crate::model::{read_checkpoint, write_checkpoint, Generator, TIME_REDUCTION};
use crate::vocoder::{
    analyze, check_rate, f0_statistics, lgn_convert, synthesize, F0Stats, FeatureSet,
};

pub const LOSS_LOG: &str = "loss.log";
pub const LATEST_CHECKPOINT: &str = "latest.bcck";
pub const CONFIG_FILE: &str = "config.txt";

pub fn epoch_checkpoint_name(epoch: usize) -> String {
    format!("ckpt-e{epoch:05}.bcck")
}

/// Fresh state and training utterances for `dataset`: the training split is
/// loaded and its statistics fix the normalization and F0 conversion.
pub fn prepare(config: &TrainConfig, dataset: &Path) -> Result<(TrainState, Vec<Utterance>)> {
    config.validate()?;
    let ids = list_pairs(dataset)?;
    let (train_ids, _) = split_ids(&ids, config.seed);
    let data = load_utterances(dataset, &train_ids)?;
    let state = initial_state(config, &data)?;
    Ok((state, data))
}

/// Untrained state with statistics taken from `data`.
pub fn initial_state(config: &TrainConfig, data: &[Utterance]) -> Result<TrainState> {
    let norms = (
        NormStats::from_features(data.iter().map(|u| &u.bc))?,
        NormStats::from_features(data.iter().map(|u| &u.ac))?,
    );
    let bc: Vec<FeatureSet> = data.iter().map(|u| u.bc.clone()).collect();
    let ac: Vec<FeatureSet> = data.iter().map(|u| u.ac.clone()).collect();
    let f0 = (f0_statistics(&bc)?, f0_statistics(&ac)?);
    TrainState::new(config.clone(), norms, f0)
}

/// Steps in one pass over `n` utterances.
pub fn steps_per_epoch(n: usize, batch_size: usize) -> usize {
    n.div_ceil(batch_size)
}

/// Batches of iteration `state.iteration`. Sampling depends only on the seed
/// and the iteration, so a resumed run draws the same crops.
pub fn batches_for_iteration(state: &TrainState, data: &[Utterance]) -> Result<Vec<Batch>> {
    let cfg = &state.config;
    if data.is_empty() {
        return Err(Error::Data("no training utterances".into()));
    }
    let spe = steps_per_epoch(data.len(), cfg.batch_size) as u64;
    let epoch = state.iteration / spe;
    let k = (state.iteration % spe) as usize;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    epoch_rng.set_stream(epoch << 1);
    order.shuffle(&mut epoch_rng);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream((state.iteration << 1) | 1);
    let end = ((k + 1) * cfg.batch_size).min(order.len());
    order[k * cfg.batch_size..end]
        .iter()
        .map(|&i| {
            make_batch_for(
                data,
                i,
                cfg.mapping,
                cfg.crop_frames,
                (&state.norm_bc, &state.norm_ac),
                &mut rng,
            )
        })
        .collect()
}

/// Parses a loss log back into records.
pub fn read_loss_log(path: &Path) -> Result<Vec<StepLosses>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_loss_log(&text)
}

pub fn parse_loss_log(text: &str) -> Result<Vec<StepLosses>> {
    let bad = |n: usize, why: &str| Error::format("loss log", format!("line {n}: {why}"));
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 7 {
            return Err(bad(n, "expected 7 fields"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(n, "bad number"));
        out.push(StepLosses {
            iteration: f[0].parse().map_err(|_| bad(n, "bad iteration"))?,
            adc: num(f[1])?,
            add: if f[2] == "-" { None } else { Some(num(f[2])?) },
            cyc: num(f[3])?,
            id: num(f[4])?,
            total: num(f[5])?,
            disc: num(f[6])?,
        });
    }
    Ok(out)
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub loss_log: PathBuf,
    pub iterations: u64,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs `state.config.epochs` epochs over `data`, continuing from
/// `state.iteration`. Loss records past the starting iteration in an
/// existing log are dropped first, so a resumed run rewrites the same log.
pub fn train_loop(mut state: TrainState, data: &[Utterance], out: &Path) -> Result<TrainOutcome> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let cfg = state.config.clone();
    write_text(&out.join(CONFIG_FILE), &cfg.to_text())?;
    let log_path = out.join(LOSS_LOG);
    let mut kept = String::from(LOSS_LOG_HEADER);
    kept.push('\n');
    if state.iteration > 0 && log_path.exists() {
        let text = fs::read_to_string(&log_path).map_err(|e| Error::io(&log_path, e))?;
        for line in text.lines().filter(|l| !l.starts_with('#')) {
            let it: u64 = line
                .split('\t')
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::format("loss log", format!("bad record {line:?}")))?;
            if it < state.iteration {
                kept.push_str(line);
                kept.push('\n');
            }
        }
    }
    write_text(&log_path, &kept)?;
    let mut log = fs::OpenOptions::new()
        .append(true)
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;

    let spe = steps_per_epoch(data.len(), cfg.batch_size) as u64;
    let total = cfg.epochs as u64 * spe;
    let latest = out.join(LATEST_CHECKPOINT);
    if state.iteration >= total {
        write_checkpoint(&latest, &state.to_checkpoint())?;
    }
    while state.iteration < total {
        let batches = batches_for_iteration(&state, data)?;
        let losses = train_step(&mut state, &batches)?;
        writeln!(log, "{}", losses.to_record()).map_err(|e| Error::io(&log_path, e))?;
        if state.iteration % spe == 0 {
            let epoch = (state.iteration / spe) as usize;
            log::info!(
                "epoch {epoch}/{}: cyc {:.4} id {:.4} total {:.4} disc {:.4}",
                cfg.epochs,
                losses.cyc,
                losses.id,
                losses.total,
                losses.disc
            );
            let ckpt = state.to_checkpoint();
            if epoch % cfg.checkpoint_every == 0 {
                write_checkpoint(&out.join(epoch_checkpoint_name(epoch)), &ckpt)?;
            }
            write_checkpoint(&latest, &ckpt)?;
        }
    }
    log.flush().map_err(|e| Error::io(&log_path, e))?;
    Ok(TrainOutcome {
        checkpoint: latest,
        loss_log: log_path,
        iterations: state.iteration,
    })
}

/// Trains from scratch on `dataset`, writing into `out`.
pub fn train(config: &TrainConfig, dataset: &Path, out: &Path) -> Result<TrainOutcome> {
    let (state, data) = prepare(config, dataset)?;
    train_loop(state, &data, out)
}

/// Continues the run stored in `checkpoint` up to `config.epochs`. Every
/// setting except `epochs` and `checkpoint_every` must match the stored one.
pub fn resume(
    config: &TrainConfig,
    checkpoint: &Path,
    dataset: &Path,
    out: &Path,
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut state = TrainState::from_checkpoint(&read_checkpoint(checkpoint)?)?;
    if state.config.resume_identity() != config.resume_identity() {
        return Err(Error::Config(format!(
            "configuration differs from the one stored in {}",
            checkpoint.display()
        )));
    }
    state.config = config.clone();
    let ids = list_pairs(dataset)?;
    let (train_ids, _) = split_ids(&ids, config.seed);
    let data = load_utterances(dataset, &train_ids)?;
    train_loop(state, &data, out)
}

/// Maps z-normalized BC features `[24, T]` (T a multiple of 4) to
/// z-normalized AC features.
pub trait FeatureMapper {
    fn map_features(&self, normalized: &Tensor) -> Result<Tensor>;
}

impl FeatureMapper for Generator {
    fn map_features(&self, normalized: &Tensor) -> Result<Tensor> {
        self.infer(normalized)
    }
}

/// Passes features through unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityMapper;

impl FeatureMapper for IdentityMapper {
    fn map_features(&self, normalized: &Tensor) -> Result<Tensor> {
        Ok(normalized.clone())
    }
}

/// Statistics used to move features between the BC and AC domains.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainStats {
    pub norm_bc: NormStats,
    pub norm_ac: NormStats,
    pub f0_bc: F0Stats,
    pub f0_ac: F0Stats,
}

impl DomainStats {
    pub fn of(state: &TrainState) -> Self {
        Self {
            norm_bc: state.norm_bc.clone(),
            norm_ac: state.norm_ac.clone(),
            f0_bc: state.f0_bc,
            f0_ac: state.f0_ac,
        }
    }
}

/// Enhanced features of a BC utterance: MCEPs go through `mapper`, F0 is
/// converted between the domains' log-F0 statistics and aperiodicity is
/// kept.
pub fn enhance_features(
    mapper: &dyn FeatureMapper,
    bc: &FeatureSet,
    stats: &DomainStats,
) -> Result<FeatureSet> {
    bc.validate()?;
    let t = bc.frames();
    if t == 0 {
        return Err(Error::Input(
            "cannot enhance an utterance with no frames".into(),
        ));
    }
    let padded = t.div_ceil(TIME_REDUCTION) * TIME_REDUCTION;
    let input = crop_columns(&stats.norm_bc.normalize(&bc.mcep), 0, padded);
    let mapped = mapper.map_features(&input)?;
    let mcep = stats.norm_ac.denormalize(&crop_columns(&mapped, 0, t));
    let f0 = lgn_convert(&bc.f0, &stats.f0_bc, &stats.f0_ac)?
        .into_iter()
        .map(|f| if f > 0.0 { f.clamp(50.0, 500.0) } else { 0.0 })
        .collect();
    Ok(FeatureSet {
        f0,
        mcep,
        ap: bc.ap.clone(),
    })
}

/// Full pipeline on a waveform: analysis, feature mapping, synthesis.
pub fn enhance_with(
    mapper: &dyn FeatureMapper,
    stats: &DomainStats,
    waveform: &[f64],
    rate: u32,
) -> Result<Vec<f64>> {
    check_rate(rate)?;
    let bc = analyze(waveform, rate)?;
    synthesize(&enhance_features(mapper, &bc, stats)?)
}

/// Enhances with the trained BC → AC generator.
pub fn enhance(state: &TrainState, waveform: &[f64], rate: u32) -> Result<Vec<f64>> {
    enhance_with(&state.g_ba.net, &DomainStats::of(state), waveform, rate)
}

/// Utterances held out for evaluation: the test split, or every utterance
/// when the corpus is too small to have one.
pub fn evaluation_ids(dataset: &Path, seed: u64) -> Result<Vec<String>> {
    let ids = list_pairs(dataset)?;
    let (_, test) = split_ids(&ids, seed);
    Ok(if test.is_empty() { ids } else { test })
}

/// Enhances each listed BC utterance and scores it against its AC
/// reference. Utterances are processed in parallel; the report is sorted by id.
pub fn evaluate_with(
    mapper: &(dyn FeatureMapper + Sync),
    stats: &DomainStats,
    dataset: &Path,
    ids: &[String],
) -> Result<EvalReport> {
    let score = |id: &String| -> Result<EvalRow> {
        let (bc, rate) = read_wav(&wav_path(dataset, "bc", id))?;
        let (ac, ac_rate) = read_wav(&wav_path(dataset, "ac", id))?;
        check_rate(ac_rate)?;
        let enhanced = enhance_with(mapper, stats, &bc, rate)?;
        score_pair(id, &ac, &enhanced)
    };
    let rows = data::parallel_map(ids, score);
    EvalReport::from_rows(rows.into_iter().collect::<Result<Vec<_>>>()?)
}

/// [`evaluate_with`] using the trained generator.
pub fn evaluate(state: &TrainState, dataset: &Path, ids: &[String]) -> Result<EvalReport> {
    evaluate_with(&state.g_ba.net, &DomainStats::of(state), dataset, ids)
}
