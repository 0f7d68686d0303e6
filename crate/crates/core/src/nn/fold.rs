use super::{ConvLayer, Layer, ModelGraph, Tensor};
use crate::error::{Error, Result};

/// Absorbs every batch-norm layer into the conv layer right before it.
///
/// Each output channel of the conv is scaled by `gamma / sqrt(var + eps)`
/// and its bias becomes `(bias - mean) * scale + beta`.
pub fn fold_batchnorm(model: &ModelGraph) -> Result<ModelGraph> {
    let mut layers: Vec<Layer> = Vec::with_capacity(model.layers().len());
    for layer in model.layers() {
        let Layer::BatchNorm(bn) = layer else {
            layers.push(layer.clone());
            continue;
        };
        let Some(Layer::Conv(conv)) = layers.last_mut() else {
            return Err(Error::Structure(format!(
                "batchnorm `{}` is not directly preceded by a conv layer",
                bn.name
            )));
        };
        if conv.c_out() != bn.channels() {
            return Err(Error::Shape(format!(
                "batchnorm `{}` has {} channels but conv `{}` has {} filters",
                bn.name,
                bn.channels(),
                conv.name,
                conv.c_out()
            )));
        }
        let per_filter = conv.weights.stride0();
        let old_bias = conv.bias_or_zero();
        let mut weights = conv.weights.data().to_vec();
        let mut bias = Vec::with_capacity(conv.c_out());
        for (o, filter) in weights.chunks_exact_mut(per_filter).enumerate() {
            let scale = bn.gamma[o] as f64 / (bn.var[o] as f64 + bn.epsilon as f64).sqrt();
            for w in filter {
                *w = (*w as f64 * scale) as f32;
            }
            bias.push(((old_bias[o] as f64 - bn.mean[o] as f64) * scale + bn.beta[o] as f64) as f32);
        }
        *conv = ConvLayer::new(
            conv.name.clone(),
            Tensor::new(conv.weights.shape().to_vec(), weights)?,
            Some(Tensor::new(vec![bias.len()], bias)?),
            conv.stride,
            conv.padding,
        )?;
    }
    ModelGraph::new(model.input_shape().to_vec(), layers)
}
