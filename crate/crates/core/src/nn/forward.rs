use std::collections::BTreeMap;

use super::layer::conv_output_hw;
use super::{BatchNormLayer, ConvLayer, FcLayer, Layer, ModelGraph, Tensor};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Runs `model` on one image.
///
/// `captured` holds the raw output of every named layer. For the last conv
/// of a residual block that is the conv result before the shortcut add.
pub fn forward(
    model: &ModelGraph,
    input: &Tensor,
    capture: &[&str],
) -> Result<(Tensor, BTreeMap<String, Tensor>)> {
    let mut wanted = Vec::with_capacity(capture.len());
    for name in capture {
        wanted.push(model.layer_index(name)?);
    }
    let mut captured = BTreeMap::new();
    let output = run(model, input, model.layers().len(), |idx, t| {
        if wanted.contains(&idx) {
            captured.insert(model.layers()[idx].name().to_string(), t.clone());
        }
    })?;
    Ok((output, captured))
}

/// Tensor entering layer `stop` (the model output when `stop == layers.len()`).
pub fn forward_until(model: &ModelGraph, input: &Tensor, stop: usize) -> Result<Tensor> {
    if stop > model.layers().len() {
        return Err(Error::Parameter(format!(
            "stop index {stop} beyond {} layers",
            model.layers().len()
        )));
    }
    run(model, input, stop, |_, _| {})
}

/// Tensor entering the named layer.
pub fn layer_input(model: &ModelGraph, input: &Tensor, name: &str) -> Result<Tensor> {
    forward_until(model, input, model.layer_index(name)?)
}

fn run(
    model: &ModelGraph,
    input: &Tensor,
    stop: usize,
    mut on_output: impl FnMut(usize, &Tensor),
) -> Result<Tensor> {
    if input.shape() != model.input_shape() {
        return Err(Error::Shape(format!(
            "model expects input {:?}, got {:?}",
            model.input_shape(),
            input.shape()
        )));
    }
    let mut x = input.clone();
    // (index of the block's last conv, shortcut tensor)
    let mut shortcut: Option<(usize, Tensor)> = None;
    for (idx, layer) in model.layers()[..stop].iter().enumerate() {
        x = match layer {
            Layer::Conv(conv) => conv2d(conv, &x)?,
            Layer::Relu { .. } => relu(x),
            Layer::MaxPool { name, kernel, stride } => max_pool(name, &x, *kernel, *stride)?,
            Layer::Fc(fc) => linear(fc, &x)?,
            Layer::BatchNorm(bn) => batch_norm(bn, x)?,
            Layer::Block(spec) => {
                shortcut = Some((model.block_end(spec)?, x.clone()));
                x
            }
        };
        on_output(idx, &x);
        if let Some((end, _)) = &shortcut {
            if *end == idx {
                let (_, s) = shortcut.take().expect("checked above");
                if s.shape() != x.shape() {
                    return Err(Error::Shape(format!(
                        "residual add at `{}`: {:?} vs {:?}",
                        layer.name(),
                        s.shape(),
                        x.shape()
                    )));
                }
                x.data_mut()
                    .iter_mut()
                    .zip(s.data())
                    .for_each(|(a, b)| *a += b);
            }
        }
    }
    Ok(x)
}

fn rank3(x: &Tensor, what: &str) -> Result<(usize, usize, usize)> {
    match *x.shape() {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(Error::Shape(format!(
            "{what} expects a [c, h, w] tensor, got {:?}",
            x.shape()
        ))),
    }
}

/// Writes the receptive field of every output position into `out`, row by
/// row. Column order is channel-major, then kernel row, then kernel column.
#[allow(clippy::too_many_arguments)]
fn unroll_patches<T: Copy + Default + From<f32>>(
    x: &Tensor,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    ho: usize,
    wo: usize,
    out: &mut [T],
) {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let k = c * kh * kw;
    let data = x.data();
    for oy in 0..ho {
        for ox in 0..wo {
            let row = &mut out[(oy * wo + ox) * k..(oy * wo + ox + 1) * k];
            let mut col = 0;
            for ch in 0..c {
                let plane = &data[ch * h * w..(ch + 1) * h * w];
                for ky in 0..kh {
                    let iy = (oy * stride + ky) as isize - padding as isize;
                    for kx in 0..kw {
                        let ix = (ox * stride + kx) as isize - padding as isize;
                        row[col] = if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                            T::from(plane[iy as usize * w + ix as usize])
                        } else {
                            T::default()
                        };
                        col += 1;
                    }
                }
            }
        }
    }
}

/// Unrolls convolution patches into a `[H_out·W_out, c_in·k_h·k_w]` matrix.
pub fn im2col(
    input: &Tensor,
    k_h: usize,
    k_w: usize,
    stride: usize,
    padding: usize,
) -> Result<Matrix> {
    let (c, h, w) = rank3(input, "im2col")?;
    if stride == 0 {
        return Err(Error::Parameter("im2col stride must be positive".into()));
    }
    let (ho, wo) = conv_output_hw(h, w, k_h, k_w, stride, padding).ok_or_else(|| {
        Error::Shape(format!(
            "kernel {k_h}x{k_w} does not fit input {h}x{w} with padding {padding}"
        ))
    })?;
    let cols = c * k_h * k_w;
    let mut data = vec![0.0f64; ho * wo * cols];
    unroll_patches(input, k_h, k_w, stride, padding, ho, wo, &mut data);
    Matrix::new(ho * wo, cols, data)
}

pub(crate) fn conv2d(conv: &ConvLayer, x: &Tensor) -> Result<Tensor> {
    let (c, h, w) = rank3(x, "conv")?;
    if c != conv.c_in() {
        return Err(Error::Shape(format!(
            "conv `{}` expects {} channels, got {c}",
            conv.name,
            conv.c_in()
        )));
    }
    let (kh, kw) = conv.kernel();
    let (ho, wo) = conv_output_hw(h, w, kh, kw, conv.stride, conv.padding).ok_or_else(|| {
        Error::Shape(format!("conv `{}` kernel exceeds padded input {h}x{w}", conv.name))
    })?;
    let k = c * kh * kw;
    let positions = ho * wo;
    let mut cols = vec![0.0f32; positions * k];
    unroll_patches(x, kh, kw, conv.stride, conv.padding, ho, wo, &mut cols);

    let weights = conv.weights.data();
    let bias = conv.bias_or_zero();
    let mut out = vec![0.0f32; conv.c_out() * positions];
    for (o, plane) in out.chunks_exact_mut(positions).enumerate() {
        let filter = &weights[o * k..(o + 1) * k];
        for (p, v) in plane.iter_mut().enumerate() {
            let patch = &cols[p * k..(p + 1) * k];
            let dot: f32 = filter.iter().zip(patch).map(|(a, b)| a * b).sum();
            *v = dot + bias[o];
        }
    }
    Ok(Tensor::from_parts_unchecked(vec![conv.c_out(), ho, wo], out))
}

fn relu(mut x: Tensor) -> Tensor {
    x.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    x
}

fn max_pool(name: &str, x: &Tensor, kernel: usize, stride: usize) -> Result<Tensor> {
    let (c, h, w) = rank3(x, "maxpool")?;
    let (ho, wo) = conv_output_hw(h, w, kernel, kernel, stride, 0)
        .ok_or_else(|| Error::Shape(format!("maxpool `{name}` window exceeds input {h}x{w}")))?;
    let data = x.data();
    let mut out = Vec::with_capacity(c * ho * wo);
    for ch in 0..c {
        let plane = &data[ch * h * w..(ch + 1) * h * w];
        for oy in 0..ho {
            for ox in 0..wo {
                let mut m = f32::NEG_INFINITY;
                for ky in 0..kernel {
                    for kx in 0..kernel {
                        m = m.max(plane[(oy * stride + ky) * w + ox * stride + kx]);
                    }
                }
                out.push(m);
            }
        }
    }
    Ok(Tensor::from_parts_unchecked(vec![c, ho, wo], out))
}

fn linear(fc: &FcLayer, x: &Tensor) -> Result<Tensor> {
    let (out_f, in_f) = (fc.out_features(), fc.in_features());
    if x.numel() != in_f {
        return Err(Error::Shape(format!(
            "fc `{}` expects {in_f} inputs, got {}",
            fc.name,
            x.numel()
        )));
    }
    let w = fc.weights.data();
    let xs = x.data();
    let out = (0..out_f)
        .map(|o| {
            let dot: f32 = w[o * in_f..(o + 1) * in_f]
                .iter()
                .zip(xs)
                .map(|(a, b)| a * b)
                .sum();
            dot + fc.bias.as_ref().map_or(0.0, |b| b.data()[o])
        })
        .collect();
    Ok(Tensor::from_parts_unchecked(vec![out_f], out))
}

fn batch_norm(bn: &BatchNormLayer, mut x: Tensor) -> Result<Tensor> {
    if x.shape().first() != Some(&bn.channels()) {
        return Err(Error::Shape(format!(
            "batchnorm `{}` has {} channels, input is {:?}",
            bn.name,
            bn.channels(),
            x.shape()
        )));
    }
    let per = x.stride0();
    for (ch, slab) in x.data_mut().chunks_exact_mut(per).enumerate() {
        let inv = 1.0 / (bn.var[ch] + bn.epsilon).sqrt();
        for v in slab {
            *v = (*v - bn.mean[ch]) * inv * bn.gamma[ch] + bn.beta[ch];
        }
    }
    Ok(x)
}
