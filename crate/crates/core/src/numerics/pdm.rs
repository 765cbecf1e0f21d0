//! `PDM1` matrix files: 8-byte magic `PDM1\0\0\0\0`, rows and cols as
//! little-endian u64, then row-major little-endian f32 values.

use std::fs;
use std::path::Path;

use super::Matrix;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 8] = *b"PDM1\0\0\0\0";
const HEADER_LEN: usize = 24;

pub fn encode(m: &Matrix<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * m.as_slice().len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Matrix<f32>> {
    let bad = |reason: String| Error::Malformed {
        what: "PDM1 matrix".into(),
        reason,
    };
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if bytes[..8] != MAGIC {
        return Err(bad("bad magic".into()));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let want = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| bad(format!("{rows}x{cols} overflows")))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() as u64 != want {
        return Err(bad(format!(
            "{rows}x{cols} needs {want} payload bytes, found {}",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Matrix::new(rows as usize, cols as usize, data)
}

pub fn write(path: &Path, m: &Matrix<f32>) -> Result<()> {
    fs::write(path, encode(m)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Matrix<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Malformed { reason, .. } => Error::Malformed {
            what: path.display().to_string(),
            reason,
        },
        other => other,
    })
}
