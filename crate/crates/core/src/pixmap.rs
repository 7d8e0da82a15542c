//! Binary portable graymap (P5) and pixmap (P6) codec, maxval 255 only.

use crate::raster::{Raster, RasterError};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PixmapError {
    #[error("unsupported magic number {0:?}; expected P5 or P6")]
    Magic(String),
    #[error("malformed header: {0}")]
    Header(&'static str),
    #[error("maxval must be 255, got {0}")]
    MaxVal(u64),
    #[error("truncated payload: expected {expected} bytes, got {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn skip_separators(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &'static str) -> Result<u64, PixmapError> {
        self.skip_separators();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(PixmapError::Header(what));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(PixmapError::Header(what))
    }
}

/// Decode a binary P5/P6 stream. Trailing bytes after the payload are ignored.
pub fn load_pixmap(bytes: &[u8]) -> Result<Raster, PixmapError> {
    let magic = bytes.get(..2).unwrap_or(bytes);
    let channels = match magic {
        b"P5" => 1,
        b"P6" => 3,
        other => return Err(PixmapError::Magic(String::from_utf8_lossy(other).into_owned())),
    };
    let mut cursor = HeaderCursor { bytes, pos: 2 };
    if !bytes.get(2).is_some_and(|b| b.is_ascii_whitespace() || *b == b'#') {
        return Err(PixmapError::Header("magic must be followed by whitespace"));
    }
    let width = cursor.number("width")?;
    let height = cursor.number("height")?;
    let maxval = cursor.number("maxval")?;
    if maxval != 255 {
        return Err(PixmapError::MaxVal(maxval));
    }
    if width == 0 || height == 0 {
        return Err(PixmapError::Header("zero dimension"));
    }
    match bytes.get(cursor.pos) {
        Some(b) if b.is_ascii_whitespace() => cursor.pos += 1,
        _ => return Err(PixmapError::Header("maxval must be followed by one whitespace byte")),
    }
    let expected = (width as usize)
        .checked_mul(height as usize)
        .and_then(|n| n.checked_mul(channels))
        .ok_or(PixmapError::Header("dimensions overflow"))?;
    let payload = &bytes[cursor.pos..];
    if payload.len() < expected {
        return Err(PixmapError::Truncated {
            expected,
            actual: payload.len(),
        });
    }
    let samples = payload[..expected].iter().map(|&b| f64::from(b)).collect();
    Ok(Raster::new(width as usize, height as usize, channels, samples)?)
}

/// Encode a raster as P5 (1 channel) or P6 (3 channels).
///
/// Real-valued samples are rounded to the nearest integer.
pub fn save_pixmap(raster: &Raster) -> Vec<u8> {
    let magic = if raster.channels() == 1 { "P5" } else { "P6" };
    let header = format!("{magic}\n{} {}\n255\n", raster.width(), raster.height());
    let mut out = Vec::with_capacity(header.len() + raster.samples().len());
    out.extend_from_slice(header.as_bytes());
    out.extend(
        raster
            .samples()
            .iter()
            .map(|&v| v.round().clamp(0.0, 255.0) as u8),
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decodes_gray_payload_verbatim() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 64, 128, 255]);
        let r = load_pixmap(&bytes).unwrap();
        assert_eq!(r.channels(), 1);
        assert_eq!(r.samples(), &[0.0, 64.0, 128.0, 255.0]);
    }

    #[test]
    fn decodes_rgb_payload_verbatim() {
        let mut bytes = b"P6 1 1 255\n".to_vec();
        bytes.extend_from_slice(&[255, 0, 0]);
        let r = load_pixmap(&bytes).unwrap();
        assert_eq!(r.channels(), 3);
        assert_eq!(r.samples(), &[255.0, 0.0, 0.0]);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5\n# made by hand\n1 1\n255\n".to_vec();
        bytes.push(7);
        assert_eq!(load_pixmap(&bytes).unwrap().samples(), &[7.0]);
    }

    #[test]
    fn single_black_pixel_encodes_compactly() {
        let r = Raster::new(1, 1, 1, vec![0.0]).unwrap();
        let bytes = save_pixmap(&r);
        assert_eq!(bytes, b"P5\n1 1\n255\n\0");
        assert_eq!(load_pixmap(&bytes).unwrap().samples(), &[0.0]);
    }

    #[test]
    fn rejects_bad_streams() {
        assert!(matches!(load_pixmap(b"P2\n1 1\n255\n0"), Err(PixmapError::Magic(_))));
        assert!(matches!(load_pixmap(b"P5\n1 1\n65535\n\0\0"), Err(PixmapError::MaxVal(65535))));
        assert!(matches!(
            load_pixmap(b"P5\n2 2\n255\n\0\0"),
            Err(PixmapError::Truncated { expected: 4, actual: 2 })
        ));
        assert!(load_pixmap(b"P5\n2\n").is_err());
        assert!(load_pixmap(b"").is_err());
        assert!(load_pixmap(b"P5\n0 1\n255\n").is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(w in 1usize..12, h in 1usize..12, rgb in any::<bool>(), seed in any::<u64>()) {
            let channels = if rgb { 3 } else { 1 };
            let samples: Vec<f64> = (0..w * h * channels)
                .map(|i| ((seed.wrapping_mul(6364136223846793005).wrapping_add((i as u64).wrapping_mul(1442695040888963407))) >> 56) as f64)
                .collect();
            let r = Raster::new(w, h, channels, samples).unwrap();
            let bytes = save_pixmap(&r);
            prop_assert_eq!(load_pixmap(&bytes).unwrap(), r.clone());
            prop_assert_eq!(save_pixmap(&load_pixmap(&bytes).unwrap()), bytes);
        }

        #[test]
        fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            let _ = load_pixmap(&bytes);
        }
    }
}
