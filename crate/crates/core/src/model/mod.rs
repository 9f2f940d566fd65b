//! Generator and discriminators built from gated convolutions, plus the
//! checkpoint container.

mod checkpoint;
mod discriminator;
mod generator;

pub use checkpoint::{
    config_hash, read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use discriminator::{
    Discriminator, DiscriminatorKind, DiscriminatorOutput, MIN_DISCRIMINATOR_FRAMES,
};
pub use generator::{Generator, TIME_REDUCTION};

/// Channel widths are the reference widths divided by `width_divisor`
/// (1 reproduces the reference layer table).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub width_divisor: usize,
    pub defect_head: DefectHead,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            width_divisor: 1,
            defect_head: DefectHead::Patch,
        }
    }
}

impl ModelConfig {
    pub fn with_divisor(width_divisor: usize) -> Self {
        Self {
            width_divisor,
            ..Self::default()
        }
    }

    pub(crate) fn width(&self, channels: usize) -> usize {
        (channels / self.width_divisor.max(1)).max(2)
    }
}

/// Head used by the defect discriminator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefectHead {
    /// 1×1 convolution to a patch grid of logits.
    Patch,
    /// Same fully connected head as the classification discriminator.
    FullyConnected,
}

/// One row of the introspected layer table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerRow {
    pub module: &'static str,
    pub kernel: Option<(usize, usize)>,
    pub stride: Option<(usize, usize)>,
    pub channels: Option<usize>,
}

impl LayerRow {
    pub(crate) fn conv(
        module: &'static str,
        kernel: (usize, usize),
        stride: (usize, usize),
        channels: usize,
    ) -> Self {
        Self {
            module,
            kernel: Some(kernel),
            stride: Some(stride),
            channels: Some(channels),
        }
    }
}

impl std::fmt::Display for LayerRow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let pair = |p: Option<(usize, usize)>| {
            p.map(|(a, b)| format!("{a}x{b}"))
                .unwrap_or_else(|| "-".into())
        };
        let ch = self
            .channels
            .map(|c| c.to_string())
            .unwrap_or_else(|| "-".into());
        write!(
            f,
            "{:<12} {:>6} {:>6} {:>6}",
            self.module,
            pair(self.kernel),
            pair(self.stride),
            ch
        )
    }
}
