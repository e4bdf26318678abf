//! `TSRB` tensor files.
//!
//! Layout, all integers little-endian:
//!
//! | bytes       | field                         |
//! |-------------|-------------------------------|
//! | 4           | magic `TSRB`                  |
//! | 1           | version, `1`                  |
//! | 1           | dtype, `0` = f32 LE           |
//! | 1           | ndim                          |
//! | 8 × ndim    | dims as u64                   |
//! | 4 × Π dims  | row-major f32 payload         |

use std::fs;
use std::path::Path;

use super::DataError;
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"TSRB";
pub const FORMAT_VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 0;

const PREAMBLE: usize = 7;

pub fn encode_tensor(tensor: &Tensor<f32>) -> Result<Vec<u8>, DataError> {
    if !tensor.is_finite() {
        return Err(DataError::NonFinite);
    }
    let ndim = u8::try_from(tensor.rank())
        .map_err(|_| DataError::BadSequence(format!("rank {} exceeds 255", tensor.rank())))?;
    let mut out = Vec::with_capacity(PREAMBLE + 8 * tensor.rank() + 4 * tensor.numel());
    out.extend_from_slice(&MAGIC);
    out.push(FORMAT_VERSION);
    out.push(DTYPE_F32);
    out.push(ndim);
    for &d in tensor.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in tensor.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor<f32>, DataError> {
    if bytes.len() < PREAMBLE {
        if bytes.len() >= 4 && bytes[..4] != MAGIC {
            return Err(DataError::BadMagic {
                found: bytes[..4].try_into().expect("four bytes"),
            });
        }
        return Err(DataError::Truncated {
            expected: PREAMBLE,
            got: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("four bytes");
    if magic != MAGIC {
        return Err(DataError::BadMagic { found: magic });
    }
    if bytes[4] != FORMAT_VERSION {
        return Err(DataError::UnsupportedVersion(bytes[4]));
    }
    if bytes[5] != DTYPE_F32 {
        return Err(DataError::UnsupportedDtype(bytes[5]));
    }
    let ndim = bytes[6] as usize;
    let header = PREAMBLE + 8 * ndim;
    if bytes.len() < header {
        return Err(DataError::Truncated {
            expected: header,
            got: bytes.len(),
        });
    }
    let mut shape = Vec::with_capacity(ndim);
    let mut numel: usize = 1;
    for chunk in bytes[PREAMBLE..header].chunks_exact(8) {
        let d = u64::from_le_bytes(chunk.try_into().expect("eight bytes"));
        let d = usize::try_from(d).map_err(|_| DataError::BadSequence(format!("dimension {d} too large")))?;
        numel = numel
            .checked_mul(d)
            .ok_or_else(|| DataError::BadSequence("element count overflows".into()))?;
        shape.push(d);
    }
    let expected = numel
        .checked_mul(4)
        .and_then(|p| p.checked_add(header))
        .ok_or_else(|| DataError::BadSequence("payload size overflows".into()))?;
    if bytes.len() < expected {
        return Err(DataError::Truncated {
            expected,
            got: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(DataError::TrailingBytes {
            extra: bytes.len() - expected,
        });
    }
    let data = bytes[header..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")))
        .collect();
    Ok(Tensor::from_parts(shape, data))
}

pub fn write_tensor(path: impl AsRef<Path>, tensor: &Tensor<f32>) -> Result<(), DataError> {
    let path = path.as_ref();
    let bytes = encode_tensor(tensor)?;
    fs::write(path, bytes).map_err(|e| DataError::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor<f32>, DataError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| DataError::io(path, e))?;
    decode_tensor(&bytes)
}
