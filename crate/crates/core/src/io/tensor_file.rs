//! `"SCTN" | rank u32 | dims u32.. | f32 values`, little-endian.

use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const TENSOR_MAGIC: &[u8; 4] = b"SCTN";
/// File extension recognized when scanning calibration directories.
pub const TENSOR_EXTENSION: &str = "sctn";

pub fn encode_tensor(t: &Tensor) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + 4 * t.rank() + 4 * t.numel());
    out.extend_from_slice(TENSOR_MAGIC);
    let rank = u32::try_from(t.rank()).map_err(|_| Error::Shape("tensor rank too large".into()))?;
    out.write_u32::<LE>(rank).expect("vec write");
    for d in t.shape() {
        let d = u32::try_from(*d).map_err(|_| Error::Shape(format!("dimension {d} too large")))?;
        out.write_u32::<LE>(d).expect("vec write");
    }
    for v in t.data() {
        out.write_f32::<LE>(*v).expect("vec write");
    }
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    let mut cur = Cursor::new(bytes);
    let fail = |offset: u64, message: String| Error::Format { offset, message };
    let mut magic = [0u8; 4];
    cur.read_exact(&mut magic)
        .map_err(|_| fail(0, "truncated magic".into()))?;
    if &magic != TENSOR_MAGIC {
        return Err(fail(0, format!("bad magic {:?}, expected \"SCTN\"", String::from_utf8_lossy(&magic))));
    }
    let rank = cur.read_u32::<LE>().map_err(|_| fail(4, "truncated rank".into()))?;
    let mut shape = Vec::new();
    for _ in 0..rank {
        let at = cur.position();
        shape.push(cur.read_u32::<LE>().map_err(|_| fail(at, "truncated dims".into()))? as usize);
    }
    let at = cur.position();
    let numel: usize = shape.iter().product();
    let left = bytes.len() as u64 - at;
    if left != numel as u64 * 4 {
        return Err(fail(
            at,
            format!("shape {shape:?} needs {} data bytes, found {left}", numel * 4),
        ));
    }
    let mut data = vec![0.0; numel];
    cur.read_f32_into::<LE>(&mut data)
        .map_err(|_| fail(at, "truncated data".into()))?;
    Tensor::new(shape, data).map_err(|e| fail(at, e.to_string()))
}

pub fn save_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_tensor(t)?).map_err(|e| Error::io(path, e))
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes).map_err(|e| match e {
        Error::Format { offset, message } => Error::Format {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}
