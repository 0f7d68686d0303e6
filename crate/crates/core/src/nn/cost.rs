use serde::{Deserialize, Serialize};

use super::{Layer, ModelGraph};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCost {
    pub name: String,
    pub kind: String,
    pub output_shape: Vec<usize>,
    pub params: u64,
    pub flops: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostSummary {
    pub params: u64,
    pub flops: u64,
    pub layers: Vec<LayerCost>,
}

/// Parameter and FLOP totals. A multiply-add counts as two operations;
/// pooling, ReLU and residual adds are free. Batch norm contributes its
/// scale and shift as parameters.
pub fn count_costs(model: &ModelGraph) -> CostSummary {
    let shapes = model
        .shapes()
        .expect("a constructed model always propagates shapes");
    let mut summary = CostSummary::default();
    for (i, layer) in model.layers().iter().enumerate() {
        let out = &shapes[i + 1];
        let (params, flops) = match layer {
            Layer::Conv(conv) => {
                let (kh, kw) = conv.kernel();
                let weights = (conv.c_out() * conv.c_in() * kh * kw) as u64;
                let bias = conv.bias.as_ref().map_or(0, |b| b.numel() as u64);
                let positions = (out[1] * out[2]) as u64;
                (weights + bias, 2 * weights * positions)
            }
            Layer::Fc(fc) => {
                let weights = fc.weights.numel() as u64;
                let bias = fc.bias.as_ref().map_or(0, |b| b.numel() as u64);
                (weights + bias, 2 * weights)
            }
            Layer::BatchNorm(bn) => (2 * bn.channels() as u64, 0),
            Layer::Relu { .. } | Layer::MaxPool { .. } | Layer::Block(_) => (0, 0),
        };
        summary.params += params;
        summary.flops += flops;
        summary.layers.push(LayerCost {
            name: layer.name().to_string(),
            kind: layer.kind().to_string(),
            output_shape: out.clone(),
            params,
            flops,
        });
    }
    summary
}
