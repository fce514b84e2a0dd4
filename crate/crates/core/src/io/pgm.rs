//! Binary PGM (P5) ground-truth masks. Only `maxval` 255 is accepted;
//! a byte `>= 128` marks a defect pixel.

use std::path::Path;

use crate::error::{Error, FormatError, Result};
use crate::grid::DefectMask;

pub const DEFECT_THRESHOLD: u8 = 128;
// Refuse rasters beyond this many pixels instead of allocating blindly.
const MAX_PIXELS: u64 = 1 << 32;

pub fn encode_mask(mask: &DefectMask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(mask.iter().map(|d| if d { 255u8 } else { 0 }));
    out
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u64, FormatError> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(FormatError::BadHeader(format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse::<u64>()
            .map_err(|_| FormatError::DimensionOverflow {
                height: u64::MAX,
                width: u64::MAX,
            })
    }
}

pub fn decode_mask(bytes: &[u8]) -> Result<DefectMask, FormatError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(FormatError::NotP5);
    }
    let mut header = Header { bytes, pos: 2 };
    if !header
        .bytes
        .get(2)
        .is_some_and(|b| b.is_ascii_whitespace() || *b == b'#')
    {
        return Err(FormatError::NotP5);
    }
    let width = header.number("width")?;
    let height = header.number("height")?;
    let maxval = header.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(FormatError::BadHeader(format!("zero dimension {width}x{height}")));
    }
    let pixels = width
        .checked_mul(height)
        .filter(|&p| p <= MAX_PIXELS)
        .ok_or(FormatError::DimensionOverflow { height, width })?;
    if maxval != 255 {
        return Err(FormatError::BadHeader(format!("maxval {maxval}, expected 255")));
    }
    // exactly one whitespace byte separates maxval from the raster
    match bytes.get(header.pos) {
        Some(b) if b.is_ascii_whitespace() => header.pos += 1,
        _ => return Err(FormatError::BadHeader("missing raster separator".into())),
    }
    let raster = &bytes[header.pos..];
    let pixels = pixels as usize;
    if raster.len() < pixels {
        return Err(FormatError::TruncatedRaster {
            expected: pixels,
            found: raster.len(),
        });
    }
    let bits: Vec<bool> = raster[..pixels].iter().map(|&b| b >= DEFECT_THRESHOLD).collect();
    DefectMask::new(height as usize, width as usize, &bits).map_err(|e| FormatError::BadHeader(e.to_string()))
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<DefectMask> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    decode_mask(&bytes).map_err(|e| Error::format(path, e))
}

pub fn write_mask(mask: &DefectMask, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_mask(mask))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pgm(width: usize, height: usize, raster: &[u8]) -> Vec<u8> {
        let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
        out.extend_from_slice(raster);
        out
    }

    #[test]
    fn all_on_and_all_off() {
        let on = decode_mask(&pgm(3, 2, &[255; 6])).unwrap();
        assert_eq!(on.defect_count(), 6);
        let off = decode_mask(&pgm(3, 2, &[0; 6])).unwrap();
        assert_eq!(off.defect_count(), 0);
    }

    #[test]
    fn checkerboard_and_threshold() {
        let (w, h) = (5, 4);
        let raster: Vec<u8> = (0..w * h)
            .map(|i| if (i / w + i % w) % 2 == 0 { 200 } else { 127 })
            .collect();
        let mask = decode_mask(&pgm(w, h, &raster)).unwrap();
        assert_eq!(mask.dims(), (h, w));
        for r in 0..h {
            for c in 0..w {
                assert_eq!(mask.get(r, c), (r + c) % 2 == 0, "({r}, {c})");
            }
        }
        let edge = decode_mask(&pgm(2, 1, &[128, 127])).unwrap();
        assert!(edge.get(0, 0) && !edge.get(0, 1));
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5\n# made by hand\n2 1\n# another\n255\n".to_vec();
        bytes.extend_from_slice(&[255, 0]);
        let mask = decode_mask(&bytes).unwrap();
        assert_eq!(mask.defect_count(), 1);
    }

    #[test]
    fn header_errors() {
        assert!(matches!(decode_mask(b"P2\n1 1\n255\n\x00"), Err(FormatError::NotP5)));
        assert!(matches!(decode_mask(b"P6\n1 1\n255\n\x00"), Err(FormatError::NotP5)));
        assert!(matches!(decode_mask(b""), Err(FormatError::NotP5)));
        assert!(matches!(
            decode_mask(b"P5\n99999999999 99999999999\n255\n"),
            Err(FormatError::DimensionOverflow { .. })
        ));
        assert!(matches!(
            decode_mask(b"P5\n999999999999999999999999 1\n255\n"),
            Err(FormatError::DimensionOverflow { .. })
        ));
        assert!(matches!(
            decode_mask(&pgm(3, 3, &[0; 8])),
            Err(FormatError::TruncatedRaster { expected: 9, found: 8 })
        ));
        assert!(matches!(
            decode_mask(b"P5\n2 2\n65535\n\x00\x00\x00\x00\x00\x00\x00\x00"),
            Err(FormatError::BadHeader(_))
        ));
        assert!(matches!(decode_mask(b"P5\n2\n"), Err(FormatError::BadHeader(_))));
    }

    #[test]
    fn encode_decode_round_trip() {
        let mask = DefectMask::from_fn(7, 9, |r, c| (r * c) % 4 == 1).unwrap();
        assert_eq!(decode_mask(&encode_mask(&mask)).unwrap(), mask);
    }
}
