//! PMAP probability-map format.
//!
//! Layout, all little-endian:
//!
//! ```text
//! offset 0   4 bytes  ASCII "PMAP"
//! offset 4   u32      height
//! offset 8   u32      width
//! offset 12  f32 * height * width, row-major
//! ```

use std::path::Path;

use crate::error::{Error, FormatError, Result};
use crate::grid::ProbabilityMap;

pub const PMAP_MAGIC: &[u8; 4] = b"PMAP";
const HEADER_LEN: usize = 12;

pub fn encode_probability_map(map: &ProbabilityMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * map.len());
    out.extend_from_slice(PMAP_MAGIC);
    out.extend_from_slice(&(map.height() as u32).to_le_bytes());
    out.extend_from_slice(&(map.width() as u32).to_le_bytes());
    for v in map.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_probability_map(bytes: &[u8]) -> Result<ProbabilityMap, FormatError> {
    if bytes.len() < 4 || &bytes[..4] != PMAP_MAGIC {
        return Err(FormatError::BadMagic {
            expected: "PMAP",
            found: bytes[..bytes.len().min(4)].to_vec(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(FormatError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    let (height, width) = (word(4), word(8));
    if height == 0 || width == 0 {
        return Err(FormatError::BadHeader(format!("zero dimension {height}x{width}")));
    }
    let expected = (height as u64)
        .checked_mul(width as u64)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN as u64))
        .and_then(|n| usize::try_from(n).ok())
        .ok_or(FormatError::DimensionOverflow {
            height: height.into(),
            width: width.into(),
        })?;
    if bytes.len() != expected {
        return Err(FormatError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let mut values = Vec::with_capacity((expected - HEADER_LEN) / 4);
    for (index, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !v.is_finite() {
            return Err(FormatError::NonFinite { index });
        }
        if !(0.0..=1.0).contains(&v) {
            return Err(FormatError::OutOfRange { index, value: v });
        }
        values.push(v);
    }
    ProbabilityMap::new(height as usize, width as usize, values).map_err(|e| FormatError::BadHeader(e.to_string()))
}

pub fn read_probability_map(path: impl AsRef<Path>) -> Result<ProbabilityMap> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    decode_probability_map(&bytes).map_err(|e| Error::format(path, e))
}

pub fn write_probability_map(map: &ProbabilityMap, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_probability_map(map))?;
    Ok(())
}
