//! Binary model format.
//!
//! ```text
//! "SCPM" | version u32 | input rank u32 | input dims u32.. | layer count u32
//! per layer: name (u16 length + UTF-8) | tag u8 | params u32.. | blobs
//! blob: element count u64 | f32 values
//! ```
//!
//! Tags and their payloads:
//!
//! | tag | layer     | params                                     | blobs                   |
//! |-----|-----------|--------------------------------------------|-------------------------|
//! | 0   | conv      | c_out, c_in, kh, kw, stride, padding       | weights, bias           |
//! | 1   | relu      |                                            |                         |
//! | 2   | maxpool   | kernel, stride                             |                         |
//! | 3   | fc        | out, in                                    | weights, bias           |
//! | 4   | batchnorm | channels, epsilon (f32 bits)               | gamma, beta, mean, var  |
//! | 5   | block     | prunable prefix, conv count, conv names    |                         |
//!
//! An absent bias is a blob of length 0. Everything is little-endian.

use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::nn::{BatchNormLayer, BlockSpec, ConvLayer, FcLayer, Layer, ModelGraph, Tensor};

pub const MODEL_MAGIC: &[u8; 4] = b"SCPM";
pub const MODEL_VERSION: u32 = 1;

const TAG_CONV: u8 = 0;
const TAG_RELU: u8 = 1;
const TAG_MAXPOOL: u8 = 2;
const TAG_FC: u8 = 3;
const TAG_BATCHNORM: u8 = 4;
const TAG_BLOCK: u8 = 5;

fn dim(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Shape(format!("{what} {v} does not fit the model format")))
}

fn put_name(out: &mut Vec<u8>, name: &str) -> Result<()> {
    let len = u16::try_from(name.len())
        .map_err(|_| Error::Input(format!("name of {} bytes is too long", name.len())))?;
    out.write_u16::<LE>(len).expect("vec write");
    out.extend_from_slice(name.as_bytes());
    Ok(())
}

fn put_blob(out: &mut Vec<u8>, data: &[f32]) {
    out.write_u64::<LE>(data.len() as u64).expect("vec write");
    for v in data {
        out.write_f32::<LE>(*v).expect("vec write");
    }
}

fn put_u32s(out: &mut Vec<u8>, values: &[(usize, &str)]) -> Result<()> {
    for (v, what) in values {
        out.write_u32::<LE>(dim(*v, what)?).expect("vec write");
    }
    Ok(())
}

/// Serializes a model to bytes.
pub fn encode_model(model: &ModelGraph) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.write_u32::<LE>(MODEL_VERSION).expect("vec write");
    let input = model.input_shape();
    out.write_u32::<LE>(dim(input.len(), "input rank")?).expect("vec write");
    for d in input {
        out.write_u32::<LE>(dim(*d, "input dim")?).expect("vec write");
    }
    out.write_u32::<LE>(dim(model.layers().len(), "layer count")?).expect("vec write");

    for layer in model.layers() {
        put_name(&mut out, layer.name())?;
        match layer {
            Layer::Conv(c) => {
                out.push(TAG_CONV);
                let (kh, kw) = c.kernel();
                put_u32s(
                    &mut out,
                    &[
                        (c.c_out(), "c_out"),
                        (c.c_in(), "c_in"),
                        (kh, "kernel"),
                        (kw, "kernel"),
                        (c.stride, "stride"),
                        (c.padding, "padding"),
                    ],
                )?;
                put_blob(&mut out, c.weights.data());
                put_blob(&mut out, c.bias.as_ref().map_or(&[][..], Tensor::data));
            }
            Layer::Relu { .. } => out.push(TAG_RELU),
            Layer::MaxPool { kernel, stride, .. } => {
                out.push(TAG_MAXPOOL);
                put_u32s(&mut out, &[(*kernel, "kernel"), (*stride, "stride")])?;
            }
            Layer::Fc(f) => {
                out.push(TAG_FC);
                put_u32s(&mut out, &[(f.out_features(), "out"), (f.in_features(), "in")])?;
                put_blob(&mut out, f.weights.data());
                put_blob(&mut out, f.bias.as_ref().map_or(&[][..], Tensor::data));
            }
            Layer::BatchNorm(bn) => {
                out.push(TAG_BATCHNORM);
                put_u32s(&mut out, &[(bn.channels(), "channels")])?;
                out.write_u32::<LE>(bn.epsilon.to_bits()).expect("vec write");
                for blob in [&bn.gamma, &bn.beta, &bn.mean, &bn.var] {
                    put_blob(&mut out, blob);
                }
            }
            Layer::Block(spec) => {
                out.push(TAG_BLOCK);
                put_u32s(
                    &mut out,
                    &[
                        (spec.prunable_prefix, "prunable prefix"),
                        (spec.conv_layer_names.len(), "block conv count"),
                    ],
                )?;
                for name in &spec.conv_layer_names {
                    put_name(&mut out, name)?;
                }
            }
        }
    }
    Ok(out)
}

/// Byte reader that reports failures with their offset.
struct Reader<'a> {
    cur: Cursor<&'a [u8]>,
    /// Layer being decoded, for error messages.
    layer: Option<String>,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self {
            cur: Cursor::new(bytes),
            layer: None,
        }
    }

    fn offset(&self) -> u64 {
        self.cur.position()
    }

    fn remaining(&self) -> u64 {
        self.cur.get_ref().len() as u64 - self.offset()
    }

    fn fail(&self, offset: u64, message: impl Into<String>) -> Error {
        let message = message.into();
        Error::Format {
            offset,
            message: match &self.layer {
                Some(l) => format!("layer `{l}`: {message}"),
                None => message,
            },
        }
    }

    fn truncated(&self, what: &str) -> Error {
        self.fail(self.offset(), format!("truncated {what}"))
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        self.cur.read_u8().map_err(|_| self.truncated(what))
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        self.cur.read_u16::<LE>().map_err(|_| self.truncated(what))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        self.cur.read_u32::<LE>().map_err(|_| self.truncated(what))
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        Ok(self.u32(what)? as usize)
    }

    fn name(&mut self) -> Result<String> {
        let at = self.offset();
        let len = self.u16("name length")? as usize;
        let mut buf = vec![0; len];
        self.cur.read_exact(&mut buf).map_err(|_| self.truncated("name"))?;
        String::from_utf8(buf).map_err(|_| self.fail(at, "name is not valid UTF-8"))
    }

    fn blob(&mut self, what: &str, expected: usize) -> Result<Vec<f32>> {
        let at = self.offset();
        let count = self.cur.read_u64::<LE>().map_err(|_| self.truncated(&format!("{what} blob")))?;
        if count != expected as u64 {
            return Err(self.fail(at, format!("{what} blob declares {count} values, expected {expected}")));
        }
        if self.remaining() < count * 4 {
            return Err(self.fail(
                at,
                format!("truncated {what} blob: {count} values declared, {} bytes left", self.remaining()),
            ));
        }
        let mut data = vec![0.0; expected];
        self.cur
            .read_f32_into::<LE>(&mut data)
            .map_err(|_| self.truncated(&format!("{what} blob")))?;
        Ok(data)
    }

    /// Optional blob: length 0 or `expected`.
    fn optional_blob(&mut self, what: &str, expected: usize) -> Result<Option<Vec<f32>>> {
        let at = self.offset();
        let mut peek = self.cur.clone();
        let count = peek.read_u64::<LE>().map_err(|_| self.truncated(&format!("{what} blob")))?;
        if count == 0 && expected != 0 {
            self.cur.set_position(at + 8);
            return Ok(None);
        }
        self.blob(what, expected).map(Some)
    }
}

/// Wraps constructor errors with the offending layer and offset.
fn checked<T>(r: &Reader<'_>, at: u64, v: Result<T>) -> Result<T> {
    v.map_err(|e| r.fail(at, e.to_string()))
}

fn product(dims: &[usize]) -> usize {
    dims.iter().product()
}

fn decode_layer(r: &mut Reader<'_>) -> Result<Layer> {
    let name = r.name()?;
    r.layer = Some(name.clone());
    let at = r.offset();
    let tag = r.u8("layer tag")?;
    let layer = match tag {
        TAG_CONV => {
            let shape = vec![
                r.usize("c_out")?,
                r.usize("c_in")?,
                r.usize("kernel height")?,
                r.usize("kernel width")?,
            ];
            let stride = r.usize("stride")?;
            let padding = r.usize("padding")?;
            let w = r.blob("weight", product(&shape))?;
            let b = r.optional_blob("bias", shape[0])?;
            let weights = checked(r, at, Tensor::new(shape.clone(), w))?;
            let bias = b.map(|b| checked(r, at, Tensor::new(vec![shape[0]], b))).transpose()?;
            Layer::Conv(checked(r, at, ConvLayer::new(name, weights, bias, stride, padding))?)
        }
        TAG_RELU => Layer::Relu { name },
        TAG_MAXPOOL => Layer::MaxPool {
            name,
            kernel: r.usize("kernel")?,
            stride: r.usize("stride")?,
        },
        TAG_FC => {
            let shape = vec![r.usize("out features")?, r.usize("in features")?];
            let w = r.blob("weight", product(&shape))?;
            let b = r.optional_blob("bias", shape[0])?;
            Layer::Fc(FcLayer {
                name,
                weights: checked(r, at, Tensor::new(shape.clone(), w))?,
                bias: b.map(|b| checked(r, at, Tensor::new(vec![shape[0]], b))).transpose()?,
            })
        }
        TAG_BATCHNORM => {
            let c = r.usize("channels")?;
            let epsilon = f32::from_bits(r.u32("epsilon")?);
            Layer::BatchNorm(BatchNormLayer {
                name,
                gamma: r.blob("gamma", c)?,
                beta: r.blob("beta", c)?,
                mean: r.blob("mean", c)?,
                var: r.blob("var", c)?,
                epsilon,
            })
        }
        TAG_BLOCK => {
            let prunable_prefix = r.usize("prunable prefix")?;
            let count = r.usize("block conv count")?;
            let conv_layer_names = (0..count).map(|_| r.name()).collect::<Result<_>>()?;
            Layer::Block(BlockSpec {
                block_id: name,
                conv_layer_names,
                prunable_prefix,
            })
        }
        other => return Err(r.fail(at, format!("unknown layer tag {other}"))),
    };
    r.layer = None;
    Ok(layer)
}

/// Parses a model from bytes.
pub fn decode_model(bytes: &[u8]) -> Result<ModelGraph> {
    let mut r = Reader::new(bytes);
    let mut magic = [0u8; 4];
    r.cur.read_exact(&mut magic).map_err(|_| r.truncated("magic"))?;
    if &magic != MODEL_MAGIC {
        return Err(r.fail(0, format!("bad magic {:?}, expected \"SCPM\"", String::from_utf8_lossy(&magic))));
    }
    let version = r.u32("version")?;
    if version != MODEL_VERSION {
        return Err(r.fail(4, format!("unsupported version {version}, expected {MODEL_VERSION}")));
    }
    let rank = r.usize("input rank")?;
    let input = (0..rank).map(|_| r.usize("input dim")).collect::<Result<Vec<_>>>()?;
    let count = r.usize("layer count")?;
    let mut layers = Vec::new();
    for _ in 0..count {
        layers.push(decode_layer(&mut r)?);
    }
    if r.remaining() != 0 {
        return Err(r.fail(r.offset(), format!("{} trailing bytes after the last layer", r.remaining())));
    }
    let end = r.offset();
    checked(&r, end, ModelGraph::new(input, layers))
}

pub fn save_model(model: &ModelGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_model(model)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelGraph> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}
