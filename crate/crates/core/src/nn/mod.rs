//! Minimal CNN representation and single-image inference engine.

mod cost;
mod fold;
mod forward;
mod layer;
mod tensor;
#[cfg(test)]
pub(crate) mod testutil;

pub use cost::{count_costs, CostSummary, LayerCost};
pub use fold::fold_batchnorm;
pub use forward::{forward, forward_until, im2col, layer_input};
pub use layer::{BatchNormLayer, BlockSpec, ConvLayer, FcLayer, Layer, ModelGraph};
pub use tensor::Tensor;
