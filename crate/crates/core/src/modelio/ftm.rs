//! `FTM1` feature files.
//!
//! Layout (little-endian):
//! - magic: `b"FTM1"`
//! - rows: u32
//! - cols: u32
//! - payload: rows * cols f32, row-major

use std::fs;
use std::path::Path;

use super::IoError;
use crate::error::Error;
use crate::numkernel::FeatureMatrix;

pub const FTM_MAGIC: [u8; 4] = *b"FTM1";
const HEADER_LEN: usize = 12;

/// Serializes a matrix, quantizing every entry to `f32`.
pub fn encode_features(m: &FeatureMatrix) -> Result<Vec<u8>, IoError> {
    let rows = u32::try_from(m.rows()).map_err(|_| Error::InvalidConfig("too many rows".into()))?;
    let cols = u32::try_from(m.cols()).map_err(|_| Error::InvalidConfig("too many columns".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * m.as_slice().len());
    out.extend_from_slice(&FTM_MAGIC);
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for (i, &v) in m.as_slice().iter().enumerate() {
        let q = v as f32;
        if !q.is_finite() {
            return Err(IoError::NonFinite {
                offset: HEADER_LEN + 4 * i,
            });
        }
        out.extend_from_slice(&q.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureMatrix, IoError> {
    if bytes.len() < HEADER_LEN {
        return Err(IoError::TruncatedFile {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().expect("slice of length 4");
    if magic != FTM_MAGIC {
        return Err(IoError::BadMagic { found: magic });
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().expect("slice of length 4")) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().expect("slice of length 4")) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or(Error::InvalidConfig("header shape overflows".into()))?;
    if bytes.len() < expected {
        return Err(IoError::TruncatedFile {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(IoError::TrailingData {
            expected,
            actual: bytes.len(),
        });
    }
    let mut values = Vec::with_capacity(rows * cols);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("chunk of length 4"));
        if !v.is_finite() {
            return Err(IoError::NonFinite {
                offset: HEADER_LEN + 4 * i,
            });
        }
        values.push(f64::from(v));
    }
    Ok(FeatureMatrix::new(rows, cols, values)?)
}

pub fn read_features(path: &Path) -> Result<FeatureMatrix, IoError> {
    let bytes = fs::read(path).map_err(|e| IoError::io(path, e))?;
    decode_features(&bytes)
}

pub fn write_features(path: &Path, m: &FeatureMatrix) -> Result<(), IoError> {
    let bytes = encode_features(m)?;
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| IoError::io(parent, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| IoError::io(path, e))
}
