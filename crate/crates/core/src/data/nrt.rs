//! NRT1: a 16-byte header followed by a row-major little-endian f32 matrix.
//!
//! ```text
//! 0..4    magic "NRT1"
//! 4..8    u32 version (1)
//! 8..12   u32 rows
//! 12..16  u32 cols
//! 16..    rows * cols binary32 values
//! ```

use std::fs;
use std::path::Path;

use super::ReprSet;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"NRT1";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

pub fn encode_repr_bytes(set: &ReprSet) -> Result<Vec<u8>> {
    let rows = u32::try_from(set.rows())
        .map_err(|_| Error::Format(format!("{} rows exceed u32", set.rows())))?;
    let cols = u32::try_from(set.dims())
        .map_err(|_| Error::Format(format!("{} cols exceed u32", set.dims())))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * set.values().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for v in set.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_repr_bytes(bytes: &[u8]) -> Result<ReprSet> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "file is {} bytes, shorter than the header",
            bytes.len()
        )));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", &bytes[0..4])));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let version = word(4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let rows = word(8) as usize;
    let cols = word(12) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format(format!("{rows}x{cols} overflows")))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected {
        return Err(Error::Format(format!(
            "truncated payload: {rows}x{cols} needs {expected} bytes, found {}",
            payload.len()
        )));
    }
    if payload.len() > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            payload.len() - expected
        )));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ReprSet::from_matrix(rows, cols, values)
}

pub fn read_repr_file(path: impl AsRef<Path>) -> Result<ReprSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_repr_bytes(&bytes)
}

pub fn write_repr_file(set: &ReprSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_repr_bytes(set)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
