//! Differentiable tensor kernel: the operator set, layers and optimizer used
//! by the gated convolutional generator and discriminators.

mod adam;
mod conv;
mod error;
pub mod gradcheck;
mod graph;
mod layers;
mod params;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use conv::{gemm, same_padding, ConvGeometry};
pub use error::{NnError, Result};
pub use graph::{shuffle_forward, shuffle_inverse, sigmoid, Graph, Var};
pub use layers::{
    conv1d_forward, glu, instance_norm, residual_forward, shuffle1d, ConvLayer, GatedBlock, GatedConvLayer,
    InstanceNormParams, LinearLayer, ResidualBlockParams, NORM_EPS,
};
pub use params::{Binding, Initializer, ParamId, ParamSet};
pub use tensor::Tensor;

/// Reverse-mode sweep from a scalar loss; see [`Graph::backward`].
pub fn backward(graph: &mut Graph, loss: Var) -> Result<()> {
    graph.backward(loss)
}
