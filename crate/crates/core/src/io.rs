//! HRT1 binary tensor files.
//!
//! Layout: the magic bytes `HRT1`, one dtype byte (0 = f32, 1 = f64), one
//! rank byte `r`, `r` little-endian `u32` extents, then the row-major
//! payload as little-endian scalars.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{DType, Scalar, Tensor};

pub const MAGIC: &[u8; 4] = b"HRT1";

/// A tensor of either supported dtype, as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl AnyTensor {
    pub fn dtype(&self) -> DType {
        match self {
            AnyTensor::F32(_) => DType::F32,
            AnyTensor::F64(_) => DType::F64,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            AnyTensor::F32(t) => t.shape(),
            AnyTensor::F64(t) => t.shape(),
        }
    }

    /// Converts to `T`, casting if the stored dtype differs.
    pub fn into_tensor<T: Scalar>(self) -> Tensor<T> {
        match self {
            AnyTensor::F32(t) => t.cast(),
            AnyTensor::F64(t) => t.cast(),
        }
    }
}

pub fn encode<T: Scalar>(t: &Tensor<T>) -> Result<Vec<u8>> {
    if t.rank() > u8::MAX as usize {
        return Err(Error::Format(format!("rank {} does not fit in a byte", t.rank())));
    }
    let mut out = Vec::with_capacity(6 + 4 * t.rank() + t.len() * T::DTYPE.size());
    out.extend_from_slice(MAGIC);
    out.push(T::DTYPE.code());
    out.push(t.rank() as u8);
    for &e in t.shape() {
        let e = u32::try_from(e)
            .map_err(|_| Error::Format(format!("extent {e} does not fit in u32")))?;
        out.extend_from_slice(&e.to_le_bytes());
    }
    for &v in t.data() {
        v.write_le(&mut out);
    }
    Ok(out)
}

fn decode_payload<T: Scalar>(shape: &[usize], payload: &[u8]) -> Result<Tensor<T>> {
    let data = payload
        .chunks_exact(T::DTYPE.size())
        .map(T::read_le)
        .collect();
    Tensor::new(shape, data).map_err(|e| Error::Format(e.to_string()))
}

pub fn decode(bytes: &[u8]) -> Result<AnyTensor> {
    let fmt = |m: &str| Error::Format(m.to_string());
    if bytes.len() < 6 || &bytes[..4] != MAGIC {
        return Err(fmt("missing HRT1 magic"));
    }
    let dtype = DType::from_code(bytes[4])
        .ok_or_else(|| Error::Format(format!("unknown dtype code {}", bytes[4])))?;
    let rank = bytes[5] as usize;
    let header = 6 + 4 * rank;
    if bytes.len() < header {
        return Err(fmt("truncated header"));
    }
    let shape: Vec<usize> = bytes[6..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
        .collect();
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &e| acc.checked_mul(e))
        .ok_or_else(|| fmt("element count overflows"))?;
    let payload = &bytes[header..];
    if payload.len() != count * dtype.size() {
        return Err(Error::Format(format!(
            "payload has {} bytes, shape {shape:?} of {} needs {}",
            payload.len(),
            dtype.name(),
            count * dtype.size()
        )));
    }
    Ok(match dtype {
        DType::F32 => AnyTensor::F32(decode_payload(&shape, payload)?),
        DType::F64 => AnyTensor::F64(decode_payload(&shape, payload)?),
    })
}

pub fn write_tensor<T: Scalar>(path: impl AsRef<Path>, t: &Tensor<T>) -> Result<()> {
    fs::write(path, encode(t)?)?;
    Ok(())
}

pub fn read_any(path: impl AsRef<Path>) -> Result<AnyTensor> {
    decode(&fs::read(path)?)
}

/// Reads a tensor whose stored dtype must be `T`.
pub fn read_tensor<T: Scalar>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    let any = read_any(path)?;
    if any.dtype() != T::DTYPE {
        return Err(Error::Format(format!(
            "stored dtype {} does not match requested {}",
            any.dtype().name(),
            T::DTYPE.name()
        )));
    }
    Ok(any.into_tensor())
}
