use bcenhance_nn::{
    conv1d_forward, Binding, ConvLayer, GatedBlock, Graph, Initializer, LinearLayer, NnError,
    ParamSet, Tensor, Var,
};

use super::{DefectHead, LayerRow, ModelConfig};
use crate::error::Result;
use crate::vocoder::MCEP_DIM;

/// Shortest input (frames) the trunk accepts: its four time strides of 2
/// must leave at least one full output column.
pub const MIN_DISCRIMINATOR_FRAMES: usize = 16;

/// Feature-axis length after the trunk (24 → 24 → 12 → 6 → 6).
const TRUNK_HEIGHT: usize = MCEP_DIM / 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscriminatorKind {
    Classification,
    Defect,
}

#[derive(Debug, Clone)]
enum Head {
    /// Time-averaged trunk output, flattened over channels × height, to one logit.
    Dense(LinearLayer),
    /// 1×1 convolution giving one logit per trunk cell.
    Patch(ConvLayer),
}

#[derive(Debug, Clone)]
pub struct Discriminator {
    pub params: ParamSet,
    pub kind: DiscriminatorKind,
    input: GatedBlock,
    encoder: [GatedBlock; 3],
    head: Head,
}

/// Graph handles of one discriminator evaluation.
#[derive(Debug, Clone, Copy)]
pub struct DiscriminatorOutput {
    /// Raw logits: `[1]` for a dense head, `[1, H, W]` for a patch head.
    pub logits: Var,
    /// `sigmoid(logits)`, same shape.
    pub scores: Var,
    /// Mean of `scores` (scalar).
    pub score: Var,
}

impl Discriminator {
    pub fn build(kind: DiscriminatorKind, seed: u64, cfg: &ModelConfig) -> Self {
        let w = |c| cfg.width(c);
        let mut p = ParamSet::new();
        let mut init = Initializer::new(seed);
        let input = GatedBlock::new(&mut p, &mut init, "input", 1, w(128), (3, 3), (1, 2), false);
        let encoder = [
            GatedBlock::new(
                &mut p,
                &mut init,
                "encoder.0",
                w(128),
                w(256),
                (3, 3),
                (2, 2),
                true,
            ),
            GatedBlock::new(
                &mut p,
                &mut init,
                "encoder.1",
                w(256),
                w(512),
                (3, 3),
                (2, 2),
                true,
            ),
            GatedBlock::new(
                &mut p,
                &mut init,
                "encoder.2",
                w(512),
                w(1024),
                (6, 3),
                (1, 2),
                true,
            ),
        ];
        let patch = kind == DiscriminatorKind::Defect && cfg.defect_head == DefectHead::Patch;
        let head = if patch {
            Head::Patch(ConvLayer::new(
                &mut p,
                &mut init,
                "head",
                w(1024),
                1,
                (1, 1),
                (1, 1),
            ))
        } else {
            Head::Dense(LinearLayer::new(
                &mut p,
                &mut init,
                "head",
                w(1024) * TRUNK_HEIGHT,
                1,
            ))
        };
        Self {
            params: p,
            kind,
            input,
            encoder,
            head,
        }
    }

    /// `features` is the `[24, T]` feature matrix, read as a one-channel
    /// image with height = feature index and width = time.
    pub fn forward(
        &self,
        graph: &mut Graph,
        binding: &Binding,
        features: Var,
    ) -> Result<DiscriminatorOutput> {
        let shape = graph.shape(features).to_vec();
        if shape.len() != 2 || shape[0] != MCEP_DIM {
            return Err(NnError::Dimension {
                op: "discriminator",
                axes: "input [features, frames]".into(),
                expected: vec![MCEP_DIM, shape.get(1).copied().unwrap_or(0)],
                got: shape,
            }
            .into());
        }
        if shape[1] < MIN_DISCRIMINATOR_FRAMES {
            return Err(NnError::Dimension {
                op: "discriminator",
                axes: format!("frames (axis 1), minimum {MIN_DISCRIMINATOR_FRAMES}"),
                expected: vec![MIN_DISCRIMINATOR_FRAMES],
                got: vec![shape[1]],
            }
            .into());
        }
        let image = graph.reshape(features, &[1, shape[0], shape[1]])?;
        let mut h = self.input.forward(graph, binding, image)?;
        for block in &self.encoder {
            h = block.forward(graph, binding, h)?;
        }
        let logits = match &self.head {
            Head::Dense(fc) => {
                let pooled = graph.mean_last_axis(h)?;
                fc.forward(graph, binding, pooled)?
            }
            Head::Patch(conv) => conv1d_forward(graph, binding, h, conv)?,
        };
        let scores = graph.sigmoid(logits);
        let score = graph.mean(scores);
        Ok(DiscriminatorOutput {
            logits,
            scores,
            score,
        })
    }

    /// Scalar score and per-cell scores without gradient tracking.
    pub fn score(&self, features: &Tensor) -> Result<(f64, Tensor)> {
        let mut g = Graph::new();
        let binding = self.params.bind_frozen(&mut g);
        let x = g.constant(features.clone());
        let out = self.forward(&mut g, &binding, x)?;
        Ok((g.value(out.score).item(), g.value(out.scores).clone()))
    }

    pub fn layer_table(&self) -> Vec<LayerRow> {
        let gated = |m, b: &GatedBlock| {
            LayerRow::conv(m, b.conv.kernel(), b.conv.stride(), b.conv.out_channels())
        };
        let mut rows = vec![gated("Conv", &self.input)];
        rows.extend(self.encoder.iter().map(|b| gated("Encoder", b)));
        rows.push(match &self.head {
            Head::Dense(_) => LayerRow {
                module: "Fully connected",
                kernel: None,
                stride: None,
                channels: None,
            },
            Head::Patch(c) => LayerRow::conv("Patch conv", c.kernel, c.stride, c.out_channels),
        });
        rows
    }
}
