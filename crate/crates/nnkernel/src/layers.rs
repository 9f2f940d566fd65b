//! Layer descriptors over a [`ParamSet`] and their graph-building forwards.

use crate::error::{dim_err, Result};
use crate::graph::{Graph, Var};
use crate::params::{Binding, Initializer, ParamId, ParamSet};
use crate::tensor::Tensor;

/// Normalization epsilon used by the model layers.
pub const NORM_EPS: f64 = 1e-5;

/// Plain convolution: weight `[out, in, kh, kw]`, optional bias `[out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvLayer {
    pub fn new(
        params: &mut ParamSet,
        init: &mut Initializer,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
    ) -> Self {
        Self::with_bias(params, init, name, in_channels, out_channels, kernel, stride, true)
    }

    /// Convolution whose bias is omitted when `bias` is false (for layers
    /// followed by instance norm, which cancels any bias).
    #[allow(clippy::too_many_arguments)]
    pub fn with_bias(
        params: &mut ParamSet,
        init: &mut Initializer,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        bias: bool,
    ) -> Self {
        let shape = [out_channels, in_channels, kernel.0, kernel.1];
        let fan_in = in_channels * kernel.0 * kernel.1;
        let weight = params.add(format!("{name}.weight"), init.he_normal(&shape, fan_in));
        let bias = bias.then(|| params.add(format!("{name}.bias"), Tensor::zeros(&[out_channels])));
        Self {
            weight,
            bias,
            kernel,
            stride,
            in_channels,
            out_channels,
        }
    }

    pub fn forward(&self, graph: &mut Graph, binding: &Binding, input: Var) -> Result<Var> {
        conv1d_forward(graph, binding, input, self)
    }
}

/// 1-D (`[C, T]`) or 2-D (`[C, H, W]`) convolution with "same" zero padding;
/// the output length along each axis is `ceil(len / stride)`.
pub fn conv1d_forward(graph: &mut Graph, binding: &Binding, input: Var, layer: &ConvLayer) -> Result<Var> {
    let c = graph.shape(input).first().copied().unwrap_or(0);
    if c != layer.in_channels {
        return Err(dim_err("conv", "input channels (axis 0)", &[layer.in_channels], &[c]));
    }
    graph.conv(input, binding[layer.weight], layer.bias.map(|b| binding[b]), layer.stride)
}

/// Gated convolution: separate linear (`W`, `b`) and gate (`V`, `c`) kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedConvLayer {
    pub linear: ConvLayer,
    pub gate: ConvLayer,
}

impl GatedConvLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        params: &mut ParamSet,
        init: &mut Initializer,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        bias: bool,
    ) -> Self {
        let mk = |params: &mut ParamSet, init: &mut Initializer, path: &str| {
            ConvLayer::with_bias(params, init, &format!("{name}.{path}"), in_channels, out_channels, kernel, stride, bias)
        };
        let linear = mk(params, init, "linear");
        let gate = mk(params, init, "gate");
        Self { linear, gate }
    }

    pub fn kernel(&self) -> (usize, usize) {
        self.linear.kernel
    }

    pub fn stride(&self) -> (usize, usize) {
        self.linear.stride
    }

    pub fn out_channels(&self) -> usize {
        self.linear.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.linear.in_channels
    }

    /// Returns `(x*W + b, x*V + c)`.
    pub fn pre_activations(&self, graph: &mut Graph, binding: &Binding, input: Var) -> Result<(Var, Var)> {
        let lin = self.linear.forward(graph, binding, input)?;
        let gate = self.gate.forward(graph, binding, input)?;
        Ok((lin, gate))
    }
}

/// `linear_pre ⊗ σ(gate_pre)`.
pub fn glu(graph: &mut Graph, linear_pre: Var, gate_pre: Var) -> Result<Var> {
    if graph.shape(linear_pre) != graph.shape(gate_pre) {
        return Err(dim_err("glu", "all axes", graph.shape(linear_pre), graph.shape(gate_pre)));
    }
    let s = graph.sigmoid(gate_pre);
    graph.mul(linear_pre, s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceNormParams {
    pub scale: ParamId,
    pub shift: ParamId,
    pub channels: usize,
}

impl InstanceNormParams {
    pub fn new(params: &mut ParamSet, name: &str, channels: usize) -> Self {
        let scale = params.add(format!("{name}.scale"), Tensor::full(&[channels], 1.0));
        let shift = params.add(format!("{name}.shift"), Tensor::zeros(&[channels]));
        Self { scale, shift, channels }
    }

    pub fn forward(&self, graph: &mut Graph, binding: &Binding, input: Var) -> Result<Var> {
        instance_norm(graph, input, binding[self.scale], binding[self.shift], NORM_EPS)
    }
}

pub fn instance_norm(graph: &mut Graph, input: Var, scale: Var, shift: Var, eps: f64) -> Result<Var> {
    graph.instance_norm(input, scale, shift, eps)
}

/// Gated conv followed by optional instance norm on both paths, then GLU.
/// Normalized blocks carry no conv biases.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedBlock {
    pub conv: GatedConvLayer,
    pub norm: Option<(InstanceNormParams, InstanceNormParams)>,
}

impl GatedBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        params: &mut ParamSet,
        init: &mut Initializer,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        normalized: bool,
    ) -> Self {
        let conv = GatedConvLayer::new(params, init, name, in_channels, out_channels, kernel, stride, !normalized);
        let norm = normalized.then(|| {
            (
                InstanceNormParams::new(params, &format!("{name}.linear_norm"), out_channels),
                InstanceNormParams::new(params, &format!("{name}.gate_norm"), out_channels),
            )
        });
        Self { conv, norm }
    }

    pub fn forward(&self, graph: &mut Graph, binding: &Binding, input: Var) -> Result<Var> {
        let (mut lin, mut gate) = self.conv.pre_activations(graph, binding, input)?;
        if let Some((nl, ng)) = &self.norm {
            lin = nl.forward(graph, binding, lin)?;
            gate = ng.forward(graph, binding, gate)?;
        }
        glu(graph, lin, gate)
    }
}

/// Two conv → instance norm → ReLU stages `H`, wrapped as `H(x) + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlockParams {
    pub stages: [(ConvLayer, InstanceNormParams); 2],
}

impl ResidualBlockParams {
    pub fn new(
        params: &mut ParamSet,
        init: &mut Initializer,
        name: &str,
        channels: usize,
        hidden: usize,
        kernel: (usize, usize),
    ) -> Self {
        let c1 = ConvLayer::with_bias(params, init, &format!("{name}.conv1"), channels, hidden, kernel, (1, 1), false);
        let n1 = InstanceNormParams::new(params, &format!("{name}.norm1"), hidden);
        let c2 = ConvLayer::with_bias(params, init, &format!("{name}.conv2"), hidden, channels, kernel, (1, 1), false);
        let n2 = InstanceNormParams::new(params, &format!("{name}.norm2"), channels);
        Self {
            stages: [(c1, n1), (c2, n2)],
        }
    }

    pub fn channels(&self) -> usize {
        self.stages[0].0.in_channels
    }
}

pub fn residual_forward(graph: &mut Graph, binding: &Binding, input: Var, block: &ResidualBlockParams) -> Result<Var> {
    let c = graph.shape(input)[0];
    let out_c = block.stages[1].0.out_channels;
    if c != block.channels() || out_c != c {
        return Err(dim_err("residual", "channels (axis 0)", &[block.channels(), out_c], &[c, c]));
    }
    let mut h = input;
    for (conv, norm) in &block.stages {
        h = conv.forward(graph, binding, h)?;
        h = norm.forward(graph, binding, h)?;
        h = graph.relu(h);
    }
    graph.add(h, input)
}

pub fn shuffle1d(graph: &mut Graph, input: Var, factor: usize) -> Result<Var> {
    graph.shuffle1d(input, factor)
}

/// Fully connected layer: weight `[out, in]`, bias `[out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_features: usize,
    pub out_features: usize,
}

impl LinearLayer {
    pub fn new(params: &mut ParamSet, init: &mut Initializer, name: &str, in_features: usize, out_features: usize) -> Self {
        let weight = params.add(
            format!("{name}.weight"),
            init.he_normal(&[out_features, in_features], in_features),
        );
        let bias = params.add(format!("{name}.bias"), Tensor::zeros(&[out_features]));
        Self {
            weight,
            bias,
            in_features,
            out_features,
        }
    }

    pub fn forward(&self, graph: &mut Graph, binding: &Binding, input: Var) -> Result<Var> {
        graph.linear(input, binding[self.weight], binding[self.bias])
    }
}
