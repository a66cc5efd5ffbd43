//! `T4CT` v1 tensor container.
//!
//! ```text
//! "T4CT" | u8 version=1 | u8 dtype (0=u8, 1=f32, 2=f64) | u8 ndim | u8 reserved=0
//! ndim × u32 dims | row-major payload
//! ```
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use super::bytes::{encode_dims, encode_payload, Cursor};
use crate::error::{Error, Result};
use crate::tensor::{DType, Tensor};

pub const MAGIC: &[u8; 4] = b"T4CT";
pub const VERSION: u8 = 1;
const FORMAT: &str = "T4CT";

pub fn dtype_code(dtype: DType) -> u8 {
    match dtype {
        DType::U8 => 0,
        DType::F32 => 1,
        DType::F64 => 2,
    }
}

pub fn dtype_from_code(code: u8) -> Option<DType> {
    match code {
        0 => Some(DType::U8),
        1 => Some(DType::F32),
        2 => Some(DType::F64),
        _ => None,
    }
}

pub fn encode_tensor(t: &Tensor) -> Result<Vec<u8>> {
    let ndim = u8::try_from(t.shape().rank()).map_err(|_| Error::format(FORMAT, "rank exceeds 255"))?;
    let mut out = Vec::with_capacity(8 + 4 * ndim as usize + t.numel() * t.dtype().size_in_bytes());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[VERSION, dtype_code(t.dtype()), ndim, 0]);
    encode_dims(t.shape(), FORMAT, &mut out)?;
    encode_payload(t.data(), &mut out);
    Ok(out)
}

pub fn decode_tensor(buf: &[u8]) -> Result<Tensor> {
    let mut c = Cursor::new(buf, FORMAT);
    if c.take(4, "magic")? != MAGIC {
        return Err(Error::format(FORMAT, "bad magic"));
    }
    let version = c.u8("version")?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            format: FORMAT,
            version,
        });
    }
    let code = c.u8("dtype")?;
    let dtype = dtype_from_code(code).ok_or_else(|| Error::format(FORMAT, format!("unknown dtype code {code}")))?;
    let ndim = c.u8("ndim")? as usize;
    if c.u8("reserved")? != 0 {
        return Err(Error::format(FORMAT, "reserved byte is not zero"));
    }
    if ndim == 0 {
        return Err(Error::format(FORMAT, "ndim is zero"));
    }
    let shape = c.dims(ndim)?;
    let expected = shape.numel() * dtype.size_in_bytes();
    if c.remaining() != expected {
        return Err(Error::format(
            FORMAT,
            format!("payload is {} bytes, header implies {expected}", c.remaining()),
        ));
    }
    let data = c.payload(dtype, &shape)?;
    Tensor::from_data(shape, data)
}

pub fn write_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_tensor(t)?)?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    decode_tensor(&fs::read(path)?)
}
