use bcenhance_nn::{
    conv1d_forward, residual_forward, shuffle1d, Binding, ConvLayer, GatedBlock, Graph,
    Initializer, ParamSet, ResidualBlockParams, Tensor, Var,
};

use super::{LayerRow, ModelConfig};
use crate::error::{Error, Result};
use crate::vocoder::MCEP_DIM;

const RESIDUAL_BLOCKS: usize = 6;
/// Total time downsampling of the encoder.
pub const TIME_REDUCTION: usize = 4;

/// Maps `[24, T]` feature matrices to `[24, T]` (T divisible by 4).
#[derive(Debug, Clone)]
pub struct Generator {
    pub params: ParamSet,
    input: GatedBlock,
    encoder: [GatedBlock; 2],
    converter: Vec<ResidualBlockParams>,
    decoder: [GatedBlock; 2],
    output: ConvLayer,
}

impl Generator {
    pub fn build(seed: u64, cfg: &ModelConfig) -> Self {
        let w = |c| cfg.width(c);
        let mut p = ParamSet::new();
        let mut init = Initializer::new(seed);
        let input = GatedBlock::new(
            &mut p,
            &mut init,
            "input",
            MCEP_DIM,
            w(128),
            (1, 15),
            (1, 1),
            false,
        );
        let encoder = [
            GatedBlock::new(
                &mut p,
                &mut init,
                "encoder.0",
                w(128),
                w(256),
                (1, 5),
                (1, 2),
                true,
            ),
            GatedBlock::new(
                &mut p,
                &mut init,
                "encoder.1",
                w(256),
                w(512),
                (1, 5),
                (1, 2),
                true,
            ),
        ];
        let converter = (0..RESIDUAL_BLOCKS)
            .map(|i| {
                ResidualBlockParams::new(
                    &mut p,
                    &mut init,
                    &format!("converter.{i}"),
                    w(512),
                    w(1024),
                    (1, 3),
                )
            })
            .collect();
        // each decoder block halves the channels by shuffling them into time
        let decoder = [
            GatedBlock::new(
                &mut p,
                &mut init,
                "decoder.0",
                w(512) / 2,
                w(1024),
                (1, 5),
                (1, 1),
                true,
            ),
            GatedBlock::new(
                &mut p,
                &mut init,
                "decoder.1",
                w(1024) / 2,
                w(512),
                (1, 5),
                (1, 1),
                true,
            ),
        ];
        let output = ConvLayer::new(
            &mut p,
            &mut init,
            "output",
            w(512),
            MCEP_DIM,
            (1, 15),
            (1, 1),
        );
        Self {
            params: p,
            input,
            encoder,
            converter,
            decoder,
            output,
        }
    }

    pub fn residual_blocks(&self) -> &[ResidualBlockParams] {
        &self.converter
    }

    /// Graph forward. `input` is `[24, T]`.
    pub fn forward(&self, graph: &mut Graph, binding: &Binding, input: Var) -> Result<Var> {
        let shape = graph.shape(input).to_vec();
        if shape.len() != 2 || shape[0] != MCEP_DIM {
            return Err(bcenhance_nn::NnError::Dimension {
                op: "generator",
                axes: "input [features, frames]".into(),
                expected: vec![MCEP_DIM, shape.get(1).copied().unwrap_or(0)],
                got: shape,
            }
            .into());
        }
        if shape[1] == 0 || shape[1] % TIME_REDUCTION != 0 {
            return Err(bcenhance_nn::NnError::Dimension {
                op: "generator",
                axes: format!("frames (axis 1) must be a positive multiple of {TIME_REDUCTION}"),
                expected: vec![shape[1].div_ceil(TIME_REDUCTION).max(1) * TIME_REDUCTION],
                got: vec![shape[1]],
            }
            .into());
        }
        let mut h = self.input.forward(graph, binding, input)?;
        for block in &self.encoder {
            h = block.forward(graph, binding, h)?;
        }
        for block in &self.converter {
            h = residual_forward(graph, binding, h, block)?;
        }
        for block in &self.decoder {
            h = shuffle1d(graph, h, 2)?;
            h = block.forward(graph, binding, h)?;
        }
        Ok(conv1d_forward(graph, binding, h, &self.output)?)
    }

    /// Forward pass without gradient tracking.
    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let binding = self.params.bind_frozen(&mut g);
        let x = g.constant(input.clone());
        let y = self.forward(&mut g, &binding, x)?;
        let out = g.value(y).clone();
        if !out.is_finite() {
            return Err(Error::Numeric(
                "generator produced non-finite output".into(),
            ));
        }
        Ok(out)
    }

    /// (kernel, stride, channels) per layer in forward order; residual blocks
    /// contribute two rows each.
    pub fn layer_table(&self) -> Vec<LayerRow> {
        let gated = |m, b: &GatedBlock| {
            LayerRow::conv(m, b.conv.kernel(), b.conv.stride(), b.conv.out_channels())
        };
        let mut rows = vec![gated("Conv", &self.input)];
        rows.extend(self.encoder.iter().map(|b| gated("Encoder", b)));
        for block in &self.converter {
            for (conv, _) in &block.stages {
                rows.push(LayerRow::conv(
                    "Converter",
                    conv.kernel,
                    conv.stride,
                    conv.out_channels,
                ));
            }
        }
        rows.extend(self.decoder.iter().map(|b| gated("Decoder", b)));
        rows.push(LayerRow::conv(
            "Conv",
            self.output.kernel,
            self.output.stride,
            self.output.out_channels,
        ));
        rows
    }
}
