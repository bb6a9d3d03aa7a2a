//! On-disk raster formats.
//!
//! `DECR`: 4 magic bytes, `u32` rows, `u32` cols (little-endian), then
//! `rows * cols` little-endian `f64` values in row-major order.
//!
//! PGM: binary `P5` with maxval 255, for viewing and for importing objects.

use std::fs;
use std::path::Path;

use ecam_core::Image2D;
use thiserror::Error;

use crate::error::{PipelineError, Result};

pub const MAGIC: &[u8; 4] = b"DECR";
const HEADER_LEN: usize = 12;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("bad magic at byte offset 0: expected \"DECR\"")]
    BadMagic,

    #[error("truncated {what} at byte offset {offset}: need {needed} bytes, found {available}")]
    Truncated {
        what: &'static str,
        offset: usize,
        needed: usize,
        available: usize,
    },

    #[error("{extra} unexpected trailing bytes at byte offset {offset}")]
    TrailingBytes { offset: usize, extra: usize },

    #[error("dimensions {rows}x{cols} are zero or overflow")]
    BadDimensions { rows: u64, cols: u64 },

    #[error("non-finite value at byte offset {offset}")]
    NonFinite { offset: usize },

    #[error("malformed PGM: {0}")]
    Pgm(String),

    #[error("value {value} at pixel {index} is outside 0..=255")]
    OutOfRange { index: usize, value: f64 },
}

pub fn encode_raster(img: &Image2D) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * img.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(img.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(img.cols() as u32).to_le_bytes());
    for v in img.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_raster(bytes: &[u8]) -> std::result::Result<Image2D, RasterError> {
    if bytes.len() < 4 {
        return Err(RasterError::Truncated {
            what: "magic",
            offset: 0,
            needed: 4,
            available: bytes.len(),
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(RasterError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(RasterError::Truncated {
            what: "header",
            offset: 4,
            needed: HEADER_LEN - 4,
            available: bytes.len() - 4,
        });
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as u64;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as u64;
    let payload = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .filter(|&n| rows > 0 && cols > 0 && n <= usize::MAX as u64)
        .ok_or(RasterError::BadDimensions { rows, cols })? as usize;
    let available = bytes.len() - HEADER_LEN;
    if available < payload {
        return Err(RasterError::Truncated {
            what: "payload",
            offset: HEADER_LEN + (available / 8) * 8,
            needed: payload,
            available,
        });
    }
    if available > payload {
        return Err(RasterError::TrailingBytes {
            offset: HEADER_LEN + payload,
            extra: available - payload,
        });
    }
    let mut data = Vec::with_capacity(payload / 8);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        if !v.is_finite() {
            return Err(RasterError::NonFinite {
                offset: HEADER_LEN + 8 * i,
            });
        }
        data.push(v);
    }
    Ok(Image2D::new(rows as usize, cols as usize, data).expect("validated raster"))
}

pub fn write_raster(img: &Image2D, path: &Path) -> Result<()> {
    fs::write(path, encode_raster(img)).map_err(|e| PipelineError::io(path, e))
}

pub fn read_raster(path: &Path) -> Result<Image2D> {
    let bytes = fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    decode_raster(&bytes).map_err(|e| PipelineError::raster(path, e))
}

/// Encode an image whose values are already integer levels in `0..=255`.
pub fn encode_pgm(img: &Image2D) -> std::result::Result<Vec<u8>, RasterError> {
    let mut out = format!("P5\n{} {}\n255\n", img.cols(), img.rows()).into_bytes();
    for (index, &v) in img.data().iter().enumerate() {
        if !(0.0..=255.0).contains(&v) {
            return Err(RasterError::OutOfRange { index, value: v });
        }
        out.push(v.round() as u8);
    }
    Ok(out)
}

pub fn decode_pgm(bytes: &[u8]) -> std::result::Result<Image2D, RasterError> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // Skip whitespace and comments.
        while pos < bytes.len() {
            if bytes[pos].is_ascii_whitespace() {
                pos += 1;
            } else if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(RasterError::Truncated {
                what: "PGM header",
                offset: pos,
                needed: 1,
                available: 0,
            });
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(RasterError::Pgm(format!("expected P5, found {}", fields[0])));
    }
    let parse = |s: &str, name: &str| {
        s.parse::<usize>()
            .map_err(|_| RasterError::Pgm(format!("bad {name} `{s}`")))
    };
    let cols = parse(&fields[1], "width")?;
    let rows = parse(&fields[2], "height")?;
    let maxval = parse(&fields[3], "maxval")?;
    if maxval != 255 {
        return Err(RasterError::Pgm(format!("maxval {maxval} unsupported, need 255")));
    }
    if rows == 0 || cols == 0 {
        return Err(RasterError::BadDimensions {
            rows: rows as u64,
            cols: cols as u64,
        });
    }
    // Exactly one whitespace byte separates the header from the samples.
    pos += 1;
    let needed = rows
        .checked_mul(cols)
        .ok_or(RasterError::BadDimensions {
            rows: rows as u64,
            cols: cols as u64,
        })?;
    let available = bytes.len().saturating_sub(pos);
    if available < needed {
        return Err(RasterError::Truncated {
            what: "PGM samples",
            offset: pos + available,
            needed,
            available,
        });
    }
    let data = bytes[pos..pos + needed].iter().map(|&b| b as f64).collect();
    Ok(Image2D::new(rows, cols, data).expect("validated PGM"))
}

pub fn write_pgm(img: &Image2D, path: &Path) -> Result<()> {
    let bytes = encode_pgm(img).map_err(|e| PipelineError::raster(path, e))?;
    fs::write(path, bytes).map_err(|e| PipelineError::io(path, e))
}

/// Load either format, chosen by the leading magic bytes.
pub fn read_image(path: &Path) -> Result<Image2D> {
    let bytes = fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    let decoded = if bytes.starts_with(b"P5") {
        decode_pgm(&bytes)
    } else {
        decode_raster(&bytes)
    };
    decoded.map_err(|e| PipelineError::raster(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_by_one_round_trip() {
        let img = Image2D::new(1, 1, vec![-0.0]).unwrap();
        let back = decode_raster(&encode_raster(&img)).unwrap();
        assert_eq!(back.data()[0].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn header_layout() {
        let img = Image2D::new(2, 3, vec![1.0; 6]).unwrap();
        let bytes = encode_raster(&img);
        assert_eq!(&bytes[..4], b"DECR");
        assert_eq!(&bytes[4..8], &[2, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[3, 0, 0, 0]);
        assert_eq!(bytes.len(), 12 + 48);
        assert_eq!(&bytes[12..20], &1.0f64.to_le_bytes());
    }

    #[test]
    fn truncated_payload_names_offset() {
        let img = Image2D::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut bytes = encode_raster(&img);
        bytes.truncate(12 + 8 * 2 + 3);
        let err = decode_raster(&bytes).unwrap_err();
        assert!(matches!(err, RasterError::Truncated { offset: 28, .. }), "{err:?}");
        assert!(err.to_string().contains("byte offset 28"));
        let err = decode_raster(&bytes[..7]).unwrap_err();
        assert!(matches!(err, RasterError::Truncated { what: "header", offset: 4, .. }));
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(decode_raster(b"NOPE0000000000"), Err(RasterError::BadMagic)));
        let mut zero = b"DECR".to_vec();
        zero.extend_from_slice(&0u32.to_le_bytes());
        zero.extend_from_slice(&5u32.to_le_bytes());
        assert!(matches!(decode_raster(&zero), Err(RasterError::BadDimensions { .. })));
        let mut huge = b"DECR".to_vec();
        huge.extend_from_slice(&u32::MAX.to_le_bytes());
        huge.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode_raster(&huge).is_err());
        let mut nan = encode_raster(&Image2D::zeros(1, 2));
        nan[20..28].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(decode_raster(&nan), Err(RasterError::NonFinite { offset: 20 })));
        let mut long = encode_raster(&Image2D::zeros(1, 1));
        long.push(0);
        assert!(matches!(decode_raster(&long), Err(RasterError::TrailingBytes { offset: 20, extra: 1 })));
    }

    #[test]
    fn pgm_round_trip_and_errors() {
        let img = Image2D::from_fn(3, 4, |r, c| (r * 60 + c * 7) as f64);
        let bytes = encode_pgm(&img).unwrap();
        assert!(bytes.starts_with(b"P5\n4 3\n255\n"));
        assert_eq!(decode_pgm(&bytes).unwrap(), img);
        let commented = b"P5 # note\n2 1\n255\n\x05\x06";
        assert_eq!(decode_pgm(commented).unwrap().data(), &[5.0, 6.0]);
        assert!(decode_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\x00").is_err());
        assert!(decode_pgm(b"P5\n1 1\n65535\n\x00\x00").is_err());
        assert!(encode_pgm(&Image2D::filled(1, 1, 300.0)).is_err());
    }

    proptest! {
        #[test]
        fn raster_round_trip_is_bit_exact(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
            let mut state = seed;
            let img = Image2D::from_fn(rows, cols, |_, _| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let v = f64::from_bits(state);
                if v.is_finite() { v } else { 0.5 }
            });
            let back = decode_raster(&encode_raster(&img)).unwrap();
            for (a, b) in img.data().iter().zip(back.data()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
