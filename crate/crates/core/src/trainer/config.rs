//! Training configuration and its flat `key = value` text form.
//!
//! Lines are `key = value`; blank lines and lines starting with `#` are
//! ignored. Keys:
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `epochs` | 3000 | passes over the training utterances |
//! | `batch_size` | 1 | crops per step |
//! | `lr_generator` | 0.0002 | Adam step size for both generators |
//! | `lr_discriminator` | 0.0001 | Adam step size for the discriminators |
//! | `lambda_cyc` | 10 | cycle loss weight |
//! | `lambda_id` | 5 | identity loss weight |
//! | `adversarial_form` | least_squares | or `negative_log_likelihood` |
//! | `crop_frames` | 128 | crop length, multiple of 4 and at least 16 |
//! | `mapping` | parallel | or `nonparallel` |
//! | `variant` | dual | or `baseline` (one discriminator) |
//! | `seed` | 0 | initialization and sampling seed |
//! | `width_divisor` | 1 | divides every hidden channel count |
//! | `defect_head` | patch | or `fully_connected` |
//! | `discriminator_update` | full | or `real_only` (real-sample terms only) |
//! | `checkpoint_every` | 100 | epochs between numbered checkpoints |

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::losses::{AdversarialForm, LossWeights, Variant};
use crate::model::{DefectHead, ModelConfig, MIN_DISCRIMINATOR_FRAMES};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mapping {
    /// Aligned crops of the same utterance pair.
    Parallel,
    /// Independent utterances and crop positions on each side.
    Nonparallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscriminatorUpdate {
    Full,
    RealOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub weights: LossWeights,
    pub crop_frames: usize,
    pub mapping: Mapping,
    pub variant: Variant,
    pub seed: u64,
    pub model: ModelConfig,
    pub discriminator_update: DiscriminatorUpdate,
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 3000,
            batch_size: 1,
            lr_generator: 2e-4,
            lr_discriminator: 1e-4,
            weights: LossWeights::default(),
            crop_frames: 128,
            mapping: Mapping::Parallel,
            variant: Variant::Dual,
            seed: 0,
            model: ModelConfig::default(),
            discriminator_update: DiscriminatorUpdate::Full,
            checkpoint_every: 100,
        }
    }
}

/// Keys accepted by [`TrainConfig::set`].
pub const TRAIN_KEYS: &[&str] = &[
    "epochs",
    "batch_size",
    "lr_generator",
    "lr_discriminator",
    "lambda_cyc",
    "lambda_id",
    "adversarial_form",
    "crop_frames",
    "mapping",
    "variant",
    "seed",
    "width_divisor",
    "defect_head",
    "discriminator_update",
    "checkpoint_every",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr_generator > 0.0 && self.lr_discriminator > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if self.crop_frames % 4 != 0 || self.crop_frames < MIN_DISCRIMINATOR_FRAMES {
            return bad(format!(
                "crop_frames must be a multiple of 4 and at least {MIN_DISCRIMINATOR_FRAMES}, got {}",
                self.crop_frames
            ));
        }
        if self.batch_size == 0 || self.checkpoint_every == 0 || self.model.width_divisor == 0 {
            return bad("batch_size, checkpoint_every and width_divisor must be positive".into());
        }
        self.weights.validate()
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "lr_generator" => self.lr_generator = parse(key, value)?,
            "lr_discriminator" => self.lr_discriminator = parse(key, value)?,
            "lambda_cyc" => self.weights.lambda_cyc = parse(key, value)?,
            "lambda_id" => self.weights.lambda_id = parse(key, value)?,
            "adversarial_form" => self.weights.form = value.parse::<AdversarialForm>()?,
            "crop_frames" => self.crop_frames = parse(key, value)?,
            "mapping" => {
                self.mapping = match value {
                    "parallel" => Mapping::Parallel,
                    "nonparallel" => Mapping::Nonparallel,
                    _ => {
                        return Err(Error::Config(format!(
                            "mapping: expected parallel or nonparallel, got {value:?}"
                        )))
                    }
                }
            }
            "variant" => self.variant = value.parse()?,
            "seed" => self.seed = parse(key, value)?,
            "width_divisor" => self.model.width_divisor = parse(key, value)?,
            "defect_head" => {
                self.model.defect_head = match value {
                    "patch" => DefectHead::Patch,
                    "fully_connected" => DefectHead::FullyConnected,
                    _ => {
                        return Err(Error::Config(format!(
                            "defect_head: expected patch or fully_connected, got {value:?}"
                        )))
                    }
                }
            }
            "discriminator_update" => {
                self.discriminator_update = match value {
                    "full" => DiscriminatorUpdate::Full,
                    "real_only" => DiscriminatorUpdate::RealOnly,
                    _ => {
                        return Err(Error::Config(format!(
                            "discriminator_update: expected full or real_only, got {value:?}"
                        )))
                    }
                }
            }
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in parse_pairs(text)? {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lr_generator", self.lr_generator.to_string()),
            ("lr_discriminator", self.lr_discriminator.to_string()),
            ("lambda_cyc", self.weights.lambda_cyc.to_string()),
            ("lambda_id", self.weights.lambda_id.to_string()),
            ("adversarial_form", self.weights.form.to_string()),
            ("crop_frames", self.crop_frames.to_string()),
            (
                "mapping",
                match self.mapping {
                    Mapping::Parallel => "parallel",
                    Mapping::Nonparallel => "nonparallel",
                }
                .into(),
            ),
            ("variant", self.variant.to_string()),
            ("seed", self.seed.to_string()),
            ("width_divisor", self.model.width_divisor.to_string()),
            (
                "defect_head",
                match self.model.defect_head {
                    DefectHead::Patch => "patch",
                    DefectHead::FullyConnected => "fully_connected",
                }
                .into(),
            ),
            (
                "discriminator_update",
                match self.discriminator_update {
                    DiscriminatorUpdate::Full => "full",
                    DiscriminatorUpdate::RealOnly => "real_only",
                }
                .into(),
            ),
            ("checkpoint_every", self.checkpoint_every.to_string()),
        ]
    }

    /// Settings that must match when resuming from a checkpoint (everything
    /// except the run length and checkpoint cadence).
    pub fn resume_identity(&self) -> String {
        self.entries()
            .into_iter()
            .filter(|(k, _)| !matches!(*k, "epochs" | "checkpoint_every"))
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

/// Splits `key = value` lines; rejects malformed lines and duplicate keys.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "line {}: expected `key = value`, got {line:?}",
                n + 1
            ))
        })?;
        let k = k.trim().to_string();
        if out.iter().any(|(e, _)| *e == k) {
            return Err(Error::Config(format!(
                "line {}: duplicate key {k:?}",
                n + 1
            )));
        }
        out.push((k, v.trim().to_string()));
    }
    Ok(out)
}
