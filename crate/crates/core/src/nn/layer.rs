use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub name: String,
    /// `[c_out, c_in, k_h, k_w]`
    pub weights: Tensor,
    /// `[c_out]`
    pub bias: Option<Tensor>,
    pub stride: usize,
    pub padding: usize,
}

impl ConvLayer {
    pub fn new(
        name: impl Into<String>,
        weights: Tensor,
        bias: Option<Tensor>,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let conv = Self {
            name: name.into(),
            weights,
            bias,
            stride,
            padding,
        };
        conv.validate()?;
        Ok(conv)
    }

    fn validate(&self) -> Result<()> {
        if self.weights.rank() != 4 {
            return Err(Error::Shape(format!(
                "conv `{}` weights must be rank 4, got {:?}",
                self.name,
                self.weights.shape()
            )));
        }
        if let Some(b) = &self.bias {
            if b.shape() != [self.c_out()] {
                return Err(Error::Shape(format!(
                    "conv `{}` bias shape {:?} does not match {} filters",
                    self.name,
                    b.shape(),
                    self.c_out()
                )));
            }
        }
        if self.stride == 0 {
            return Err(Error::Parameter(format!("conv `{}` has stride 0", self.name)));
        }
        Ok(())
    }

    pub fn c_out(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn c_in(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.weights.shape()[2], self.weights.shape()[3])
    }

    pub fn bias_or_zero(&self) -> Vec<f32> {
        match &self.bias {
            Some(b) => b.data().to_vec(),
            None => vec![0.0; self.c_out()],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FcLayer {
    pub name: String,
    /// `[out, in]`
    pub weights: Tensor,
    pub bias: Option<Tensor>,
}

impl FcLayer {
    pub fn out_features(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_features(&self) -> usize {
        self.weights.shape()[1]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormLayer {
    pub name: String,
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
    pub epsilon: f32,
}

impl BatchNormLayer {
    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

/// Residual block over a contiguous run of the flat layer list.
///
/// The block's input (the tensor entering its marker) is added to the raw
/// output of its last conv layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub block_id: String,
    pub conv_layer_names: Vec<String>,
    /// Leading convs whose filters may be pruned.
    pub prunable_prefix: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Conv(ConvLayer),
    Relu { name: String },
    MaxPool { name: String, kernel: usize, stride: usize },
    Fc(FcLayer),
    BatchNorm(BatchNormLayer),
    /// Marks the start of a residual block; `block_id` doubles as the layer name.
    Block(BlockSpec),
}

impl Layer {
    pub fn name(&self) -> &str {
        match self {
            Layer::Conv(c) => &c.name,
            Layer::Relu { name } | Layer::MaxPool { name, .. } => name,
            Layer::Fc(f) => &f.name,
            Layer::BatchNorm(b) => &b.name,
            Layer::Block(b) => &b.block_id,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv(_) => "conv",
            Layer::Relu { .. } => "relu",
            Layer::MaxPool { .. } => "maxpool",
            Layer::Fc(_) => "fc",
            Layer::BatchNorm(_) => "batchnorm",
            Layer::Block(_) => "block",
        }
    }

    pub fn as_conv(&self) -> Option<&ConvLayer> {
        match self {
            Layer::Conv(c) => Some(c),
            _ => None,
        }
    }

    /// Output shape for a given input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let need_rank3 = |what: &str| -> Result<(usize, usize, usize)> {
            match *input {
                [c, h, w] => Ok((c, h, w)),
                _ => Err(Error::Shape(format!(
                    "{what} `{}` expects a [c, h, w] input, got {input:?}",
                    self.name()
                ))),
            }
        };
        match self {
            Layer::Conv(conv) => {
                let (c, h, w) = need_rank3("conv")?;
                if c != conv.c_in() {
                    return Err(Error::Shape(format!(
                        "conv `{}` expects {} input channels, got {c}",
                        conv.name,
                        conv.c_in()
                    )));
                }
                let (kh, kw) = conv.kernel();
                let (ho, wo) = conv_output_hw(h, w, kh, kw, conv.stride, conv.padding)
                    .ok_or_else(|| {
                        Error::Shape(format!(
                            "conv `{}` kernel {kh}x{kw} exceeds padded input {h}x{w}",
                            conv.name
                        ))
                    })?;
                Ok(vec![conv.c_out(), ho, wo])
            }
            Layer::MaxPool { name, kernel, stride } => {
                let (c, h, w) = need_rank3("maxpool")?;
                if *kernel == 0 || *stride == 0 {
                    return Err(Error::Parameter(format!(
                        "maxpool `{name}` needs positive kernel and stride"
                    )));
                }
                let (ho, wo) = conv_output_hw(h, w, *kernel, *kernel, *stride, 0).ok_or_else(
                    || Error::Shape(format!("maxpool `{name}` window exceeds input {h}x{w}")),
                )?;
                Ok(vec![c, ho, wo])
            }
            Layer::Fc(fc) => {
                if fc.weights.rank() != 2 {
                    return Err(Error::Shape(format!("fc `{}` weights must be rank 2", fc.name)));
                }
                let numel: usize = input.iter().product();
                if numel != fc.in_features() {
                    return Err(Error::Shape(format!(
                        "fc `{}` expects {} inputs, got {numel} from {input:?}",
                        fc.name,
                        fc.in_features()
                    )));
                }
                if let Some(b) = &fc.bias {
                    if b.shape() != [fc.out_features()] {
                        return Err(Error::Shape(format!("fc `{}` bias length mismatch", fc.name)));
                    }
                }
                Ok(vec![fc.out_features()])
            }
            Layer::BatchNorm(bn) => {
                let c = bn.channels();
                if [&bn.beta, &bn.mean, &bn.var].iter().any(|v| v.len() != c) {
                    return Err(Error::Shape(format!(
                        "batchnorm `{}` parameter lengths differ",
                        bn.name
                    )));
                }
                if input.first() != Some(&c) {
                    return Err(Error::Shape(format!(
                        "batchnorm `{}` has {c} channels, input is {input:?}",
                        bn.name
                    )));
                }
                Ok(input.to_vec())
            }
            Layer::Relu { .. } | Layer::Block(_) => Ok(input.to_vec()),
        }
    }
}

pub(crate) fn conv_output_hw(
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
) -> Option<(usize, usize)> {
    let (ph, pw) = (h + 2 * padding, w + 2 * padding);
    if kh == 0 || kw == 0 || stride == 0 || kh > ph || kw > pw {
        return None;
    }
    Some(((ph - kh) / stride + 1, (pw - kw) / stride + 1))
}

/// Feed-forward network over a flat list of layers.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGraph {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
}

impl ModelGraph {
    /// Validates names, block metadata and shape propagation.
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>) -> Result<Self> {
        let model = Self {
            input_shape,
            layers,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn into_layers(self) -> Vec<Layer> {
        self.layers
    }

    pub fn layer_index(&self, name: &str) -> Result<usize> {
        self.layers
            .iter()
            .position(|l| l.name() == name)
            .ok_or_else(|| Error::Lookup(name.to_string()))
    }

    pub fn conv(&self, name: &str) -> Result<&ConvLayer> {
        let idx = self.layer_index(name)?;
        self.layers[idx]
            .as_conv()
            .ok_or_else(|| Error::Structure(format!("layer `{name}` is not a conv layer")))
    }

    pub fn blocks(&self) -> impl Iterator<Item = &BlockSpec> {
        self.layers.iter().filter_map(|l| match l {
            Layer::Block(b) => Some(b),
            _ => None,
        })
    }

    pub fn block(&self, id: &str) -> Result<&BlockSpec> {
        self.blocks()
            .find(|b| b.block_id == id)
            .ok_or_else(|| Error::Lookup(id.to_string()))
    }

    /// Input shape of every layer followed by the final output shape.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        let mut cur = self.input_shape.clone();
        for layer in &self.layers {
            let next = layer.output_shape(&cur)?;
            shapes.push(cur);
            cur = next;
        }
        shapes.push(cur);
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        Ok(self.shapes()?.pop().expect("at least the input shape"))
    }

    /// Returns a copy with the named conv layers swapped out, revalidated.
    pub fn with_convs_replaced(&self, replacements: Vec<ConvLayer>) -> Result<Self> {
        let mut layers = self.layers.clone();
        for conv in replacements {
            let idx = self.layer_index(&conv.name)?;
            if !matches!(layers[idx], Layer::Conv(_)) {
                return Err(Error::Structure(format!("layer `{}` is not a conv layer", conv.name)));
            }
            layers[idx] = Layer::Conv(conv);
        }
        Self::new(self.input_shape.clone(), layers)
    }

    /// Index of the block's last conv layer.
    pub(crate) fn block_end(&self, spec: &BlockSpec) -> Result<usize> {
        let last = spec
            .conv_layer_names
            .last()
            .ok_or_else(|| Error::Structure(format!("block `{}` has no conv layers", spec.block_id)))?;
        self.layer_index(last)
    }

    fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for layer in &self.layers {
            if !seen.insert(layer.name()) {
                return Err(Error::Structure(format!("duplicate layer name `{}`", layer.name())));
            }
            if let Layer::Conv(c) = layer {
                c.validate()?;
            }
        }
        let shapes = self.shapes()?;

        let index: HashMap<&str, usize> = self
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| (l.name(), i))
            .collect();
        let mut covered_until = 0usize;
        for (marker, layer) in self.layers.iter().enumerate() {
            let Layer::Block(spec) = layer else { continue };
            if marker < covered_until {
                return Err(Error::Structure(format!(
                    "block `{}` starts inside another block",
                    spec.block_id
                )));
            }
            if spec.conv_layer_names.is_empty() {
                return Err(Error::Structure(format!("block `{}` has no conv layers", spec.block_id)));
            }
            if spec.prunable_prefix > spec.conv_layer_names.len() {
                return Err(Error::Structure(format!(
                    "block `{}` prunable prefix {} exceeds its {} conv layers",
                    spec.block_id,
                    spec.prunable_prefix,
                    spec.conv_layer_names.len()
                )));
            }
            let mut prev = marker;
            for name in &spec.conv_layer_names {
                let &idx = index
                    .get(name.as_str())
                    .ok_or_else(|| Error::Lookup(name.clone()))?;
                if !matches!(self.layers[idx], Layer::Conv(_)) || idx <= prev {
                    return Err(Error::Structure(format!(
                        "block `{}` lists `{name}` which is not a conv following the marker in order",
                        spec.block_id
                    )));
                }
                prev = idx;
            }
            if self.layers[marker + 1..prev]
                .iter()
                .any(|l| matches!(l, Layer::Block(_)))
            {
                return Err(Error::Structure(format!("block `{}` overlaps another block", spec.block_id)));
            }
            // shortcut is the identity: shapes must agree at the add
            if shapes[marker] != shapes[prev + 1] {
                return Err(Error::Shape(format!(
                    "block `{}` input {:?} differs from its output {:?}",
                    spec.block_id,
                    shapes[marker],
                    shapes[prev + 1]
                )));
            }
            covered_until = prev + 1;
        }
        Ok(())
    }
}
