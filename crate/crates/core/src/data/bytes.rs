//! Little-endian cursor shared by the binary container formats.

use crate::error::{Error, Result};
use crate::tensor::{DType, Shape, TensorData};

pub(crate) struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    format: &'static str,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(buf: &'a [u8], format: &'static str) -> Self {
        Cursor { buf, pos: 0, format }
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                Error::format(
                    self.format,
                    format!("truncated while reading {what} ({n} bytes at offset {})", self.pos),
                )
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub(crate) fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub(crate) fn dims(&mut self, ndim: usize) -> Result<Shape> {
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(self.u32("dims")? as usize);
        }
        Shape::new(dims.clone()).map_err(|_| Error::format(self.format, format!("invalid dims {dims:?}")))
    }

    pub(crate) fn payload(&mut self, dtype: DType, shape: &Shape) -> Result<TensorData> {
        let n = shape.numel();
        let bytes = n
            .checked_mul(dtype.size_in_bytes())
            .ok_or_else(|| Error::format(self.format, "payload size overflows"))?;
        let raw = self.take(bytes, "payload")?;
        Ok(decode_payload(dtype, raw))
    }
}

pub(crate) fn decode_payload(dtype: DType, raw: &[u8]) -> TensorData {
    match dtype {
        DType::U8 => TensorData::U8(raw.to_vec()),
        DType::F32 => TensorData::F32(
            raw.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        DType::F64 => TensorData::F64(
            raw.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
    }
}

pub(crate) fn encode_payload(data: &TensorData, out: &mut Vec<u8>) {
    match data {
        TensorData::U8(v) => out.extend_from_slice(v),
        TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
    }
}

pub(crate) fn encode_dims(shape: &Shape, format: &'static str, out: &mut Vec<u8>) -> Result<()> {
    for &d in shape.dims() {
        let d = u32::try_from(d).map_err(|_| Error::format(format, format!("extent {d} does not fit u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    Ok(())
}
